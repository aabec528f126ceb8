"""Command-line front end.

Four subcommands: `stats` pools speaker statistics from a directory of
WAV files, `convert` runs the full conversion on one utterance,
`detect` compares two waveforms for envelope blowups, and `analyze`
dumps features and an F0 contour for a single file.

Exit status: 0 on success, 1 on a usage error (bad flags or flag
combinations), 2 on a processing error (unreadable files, misaligned
inputs, degenerate signals).  Diagnostics go to standard error; data
goes only to the declared output paths, except `detect`, whose output
is the flagged frame list on standard out.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

from .analysis import estimate_f0, extract_mcep
from .collapse import detect_collapsed_frames, extract_envelope
from .convert import (collect_stats, external_converter, identity_converter,
                      mean_variance_converter)
from .errors import ConfigError, Error
from .f0transform import F0Ratio, compute_f0_ratio
from .pipeline import (ConversionConfig, convert_utterance, load_f0,
                       load_mcep, load_stats, save_f0, save_mcep, save_stats,
                       write_trace)
from .signal import read_wav, write_wav

__all__ = ["main"]


class _UsageError(Exception):
    """Bad flag combination caught after argparse."""


def _note(msg):
    print(f"resvc: {msg}", file=sys.stderr)


def _add_analysis_flags(p):
    p.add_argument("--order", type=int, default=35,
                   help="mel-cepstrum order (default 35)")
    p.add_argument("--alpha", type=float, default=0.455,
                   help="frequency-warping factor (default 0.455)")
    p.add_argument("--frame-shift", type=float, default=0.005,
                   metavar="SECONDS",
                   help="analysis frame shift in seconds (default 0.005)")


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="resvc",
        description="Voice conversion by residual-excited spectral filtering.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stats", help="pool speaker statistics from a WAV directory")
    p.add_argument("--wav-dir", required=True, help="directory of mono 16-bit WAV files")
    p.add_argument("--out", required=True, help="statistics file to write")
    _add_analysis_flags(p)
    p.set_defaults(func=_cmd_stats)

    p = sub.add_parser("convert", help="convert one utterance")
    p.add_argument("--in", dest="in_path", required=True, help="input WAV")
    p.add_argument("--out", required=True, help="output WAV")
    p.add_argument("--src-stats", help="source-speaker statistics file")
    p.add_argument("--tgt-stats", help="target-speaker statistics file")
    p.add_argument("--converter", choices=("identity", "meanvar", "external"),
                   help="feature mapping (default: meanvar when statistics "
                        "are given, identity otherwise)")
    p.add_argument("--converted-features",
                   help="MCEP file for --converter external")
    p.add_argument("--f0-ratio", type=float,
                   help="pitch ratio override (default: derived from the "
                        "statistics, or 1.0 without them)")
    p.add_argument("--f0-file", help="precomputed F0 contour for the input, "
                                     "one value per line (0 = unvoiced)")
    p.add_argument("--no-gv", action="store_true",
                   help="disable the variance postfilter and collapse handling")
    p.add_argument("--threshold", type=float, default=10000.0,
                   help="collapse detection threshold (default 10000)")
    p.add_argument("--slot", type=int, default=256,
                   help="envelope slot length in samples (default 256)")
    p.add_argument("--seed", type=int, default=0,
                   help="seed for the reference rendering noise (default 0)")
    p.add_argument("--trace-dir", help="directory for intermediate dumps")
    _add_analysis_flags(p)
    p.set_defaults(func=_cmd_convert)

    p = sub.add_parser("detect", help="flag frames where one waveform's "
                                      "envelope exceeds another's")
    p.add_argument("--ref", required=True, help="reference WAV")
    p.add_argument("--test", required=True, help="WAV under test")
    p.add_argument("--threshold", type=float, default=10000.0,
                   help="envelope excess threshold (default 10000)")
    p.add_argument("--slot", type=int, default=256,
                   help="envelope slot length in samples (default 256)")
    p.add_argument("--frame-shift", type=int, default=None, metavar="SAMPLES",
                   help="frame shift in samples (default: 0.005 s at the "
                        "reference rate)")
    p.set_defaults(func=_cmd_detect)

    p = sub.add_parser("analyze", help="dump features and F0 for one WAV")
    p.add_argument("--in", dest="in_path", required=True, help="input WAV")
    p.add_argument("--out-mcep", help="MCEP feature file to write")
    p.add_argument("--out-f0", help="F0 contour file to write, one value per line")
    _add_analysis_flags(p)
    p.set_defaults(func=_cmd_analyze)

    return parser


def _cmd_stats(args):
    _check_analysis_flags(args)
    wav_dir = Path(args.wav_dir)
    if not wav_dir.is_dir():
        raise _UsageError(f"--wav-dir {wav_dir}: not a directory")
    paths = sorted(wav_dir.glob("*.wav"))
    if not paths:
        raise Error(f"{wav_dir}: no .wav files found")
    utterances = []
    for path in paths:
        w = read_wav(path)
        mcep = extract_mcep(w, args.order, args.alpha, args.frame_shift)
        f0 = estimate_f0(w, frame_shift_s=args.frame_shift)
        utterances.append((mcep, f0))
        _note(f"analyzed {path.name}: {len(mcep)} frames")
    stats = collect_stats(utterances)
    save_stats(stats, args.out)
    _note(f"wrote {args.out} from {len(paths)} utterance(s)")
    return 0


def _check_detection_flags(threshold, slot):
    if threshold <= 0:
        raise _UsageError(f"--threshold must be positive, got {threshold}")
    if slot < 8:
        raise _UsageError(f"--slot must be at least 8, got {slot}")


def _check_analysis_flags(args):
    if args.order < 1:
        raise _UsageError(f"--order must be at least 1, got {args.order}")
    if not args.frame_shift > 0:
        raise _UsageError(f"--frame-shift must be positive, got {args.frame_shift}")


def _cmd_convert(args):
    if (args.src_stats is None) != (args.tgt_stats is None):
        raise _UsageError("--src-stats and --tgt-stats must be given together")
    _check_detection_flags(args.threshold, args.slot)
    _check_analysis_flags(args)
    have_stats = args.src_stats is not None
    converter_kind = args.converter or ("meanvar" if have_stats else "identity")
    if converter_kind == "meanvar" and not have_stats:
        raise _UsageError("--converter meanvar needs --src-stats and --tgt-stats")
    if converter_kind == "external" and not args.converted_features:
        raise _UsageError("--converter external needs --converted-features")
    if args.converted_features and converter_kind != "external":
        raise _UsageError("--converted-features is only read with --converter external")

    x = read_wav(args.in_path)
    src = load_stats(args.src_stats) if have_stats else None
    tgt = load_stats(args.tgt_stats) if have_stats else None

    if args.f0_ratio is not None:
        try:
            ratio = F0Ratio(args.f0_ratio)
        except ConfigError as e:
            raise _UsageError(f"--f0-ratio: {e}") from e
    elif have_stats:
        ratio = compute_f0_ratio(src.logf0_mean, tgt.logf0_mean)
        _note(f"f0 ratio from statistics: {ratio.value:.4f}")
    else:
        ratio = F0Ratio(1.0)

    use_gv = not args.no_gv
    if use_gv and not have_stats:
        use_gv = False
        _note("variance postfilter disabled: no speaker statistics given")

    if converter_kind == "identity":
        converter = identity_converter()
    elif converter_kind == "meanvar":
        converter = mean_variance_converter(src, tgt)
    else:
        converter = external_converter(
            load_mcep(args.converted_features, x.sample_rate))

    f0 = load_f0(args.f0_file, args.frame_shift) if args.f0_file else None

    cfg = ConversionConfig(
        f0_ratio=ratio, mcep_order=args.order, alpha=args.alpha,
        frame_shift_s=args.frame_shift, collapse_threshold=args.threshold,
        slot_length=args.slot, use_gv=use_gv, converter_kind=converter_kind,
        seed=args.seed)
    out, trace = convert_utterance(x, cfg, converter, src, tgt, f0=f0)
    write_wav(out, args.out)
    if trace.flagged:
        _note(f"substituted {len(trace.flagged)} collapsed frame(s)")
    if args.trace_dir:
        write_trace(trace, args.trace_dir)
        _note(f"trace written to {args.trace_dir}")
    _note(f"wrote {args.out} ({out.duration_s:.3f} s)")
    return 0


def _cmd_detect(args):
    _check_detection_flags(args.threshold, args.slot)
    if args.frame_shift is not None and args.frame_shift < 1:
        raise _UsageError(f"--frame-shift must be positive, got {args.frame_shift}")
    ref = read_wav(args.ref)
    test = read_wav(args.test)
    shift = args.frame_shift
    if shift is None:
        shift = int(round(0.005 * ref.sample_rate))
    env_ref = extract_envelope(ref, args.slot)
    env_test = extract_envelope(test, args.slot)
    frame_count = math.ceil(min(len(ref), len(test)) / shift)
    flagged = detect_collapsed_frames(env_ref, env_test, args.threshold,
                                      shift, frame_count)
    for idx in sorted(flagged):
        print(idx)
    return 0


def _cmd_analyze(args):
    if not args.out_mcep and not args.out_f0:
        raise _UsageError("nothing to do: give --out-mcep and/or --out-f0")
    _check_analysis_flags(args)
    w = read_wav(args.in_path)
    if args.out_mcep:
        mcep = extract_mcep(w, args.order, args.alpha, args.frame_shift)
        save_mcep(mcep, args.out_mcep)
        _note(f"wrote {args.out_mcep}: {len(mcep)} frames, order {mcep.order}")
    if args.out_f0:
        f0 = estimate_f0(w, frame_shift_s=args.frame_shift)
        save_f0(f0, args.out_f0)
        voiced = int(f0.voiced_mask.sum())
        _note(f"wrote {args.out_f0}: {len(f0)} frames, {voiced} voiced")
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse exits 2 on usage problems and 0 for --help; fold the
        # former into this tool's usage-error code
        return 0 if e.code == 0 else 1
    try:
        return args.func(args)
    except _UsageError as e:
        _note(f"usage error: {e}")
        return 1
    except Error as e:
        _note(f"error: {e}")
        return 2
    except OSError as e:
        _note(f"error: {e}")
        return 2


if __name__ == "__main__":
    sys.exit(main())
