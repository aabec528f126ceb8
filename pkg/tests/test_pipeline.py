import shutil
import subprocess
import sys

import numpy as np
import pytest

from conftest import RATE, fundamental_hz, make_speech, snr_db
from resvc.analysis import (F0Contour, MelCepstrumSequence, estimate_f0,
                            extract_mcep)
from resvc.cli import main
from resvc.collapse import EnvelopeSignal
from resvc.convert import collect_stats, identity_converter
from resvc.errors import ConfigError, FormatError
from resvc.f0transform import F0Ratio
from resvc.pipeline import (ConversionConfig, convert_utterance, load_envelope,
                            load_f0, load_mcep, load_stats, save_envelope,
                            save_f0, save_mcep, save_stats, write_trace)
from resvc.signal import Waveform, power, read_wav, write_wav


def _cfg(**kw):
    kw.setdefault("use_gv", False)
    return ConversionConfig(**kw)


@pytest.fixture(scope="module")
def stats():
    w = make_speech(27, 1.0)
    return collect_stats([(extract_mcep(w), estimate_f0(w))])


# ---------------------------------------------------------------------------
# configuration


def test_config_defaults():
    cfg = ConversionConfig()
    assert isinstance(cfg.f0_ratio, F0Ratio) and cfg.f0_ratio.value == 1.0
    assert cfg.mcep_order == 35
    assert cfg.alpha == 0.455
    assert cfg.frame_shift_s == 0.005
    assert cfg.collapse_threshold == 10000.0
    assert cfg.slot_length == 256
    assert cfg.use_gv is True
    assert cfg.converter_kind == "identity"


def test_config_accepts_bare_float_ratio():
    cfg = ConversionConfig(f0_ratio=2.0)
    assert isinstance(cfg.f0_ratio, F0Ratio)
    assert cfg.f0_ratio.value == 2.0


def test_config_validation():
    with pytest.raises(ConfigError):
        ConversionConfig(converter_kind="bogus")
    with pytest.raises(ConfigError):
        ConversionConfig(mcep_order=0)
    with pytest.raises(ConfigError):
        ConversionConfig(f0_ratio=9.0)


# ---------------------------------------------------------------------------
# convert_utterance


def test_identity_conversion(speech):
    x = speech(21, 1.0)
    out, _ = convert_utterance(x, _cfg(), identity_converter())
    assert len(out) == len(x)
    assert snr_db(x, out) > 20.0
    assert power(out) == pytest.approx(power(x), rel=1e-9)


def test_gv_off_degenerates(speech):
    x = speech(22, 0.8)
    _, tr = convert_utterance(x, _cfg(), identity_converter())
    assert tr.flagged == set()
    assert np.array_equal(tr.mcp_y_sub.frames, tr.mcp_y.frames)
    assert np.array_equal(tr.sig_y_sub.samples, tr.sig_y_gv.samples)
    assert tr.env_w is None and tr.env_gv is None and tr.sig_y_w is None


def test_pitch_doubling(speech):
    x = speech(23, 1.0)  # 120 Hz source
    out, _ = convert_utterance(x, _cfg(f0_ratio=2.0), identity_converter())
    assert abs(fundamental_hz(out, 150, 350) - 240.0) <= 12.0


def test_gv_needs_stats(speech):
    with pytest.raises(ConfigError, match="statistics"):
        convert_utterance(speech(24, 0.5), ConversionConfig(),
                          identity_converter())


def test_empty_input_rejected():
    with pytest.raises(ConfigError):
        convert_utterance(Waveform(np.array([]), RATE), _cfg(),
                          identity_converter())


def test_errors_carry_stage_label(speech):
    def bad(mc):
        return MelCepstrumSequence(mc.frames[:-1], mc.alpha,
                                   mc.frame_shift_s, mc.sample_rate)

    with pytest.raises(ConfigError, match=r"\[6a:convert\]"):
        convert_utterance(speech(25, 0.5), _cfg(), bad)


@pytest.mark.parametrize("ratio", [0.5, 2.0])
def test_output_length_and_power(speech, ratio):
    x = speech(26, 1.0)
    out, _ = convert_utterance(x, _cfg(f0_ratio=ratio), identity_converter())
    budget = int(round(0.025 * RATE)) + int(round(0.005 * RATE))
    assert abs(len(out) - len(x)) <= budget
    assert power(out) == pytest.approx(power(x), rel=1e-9)
    assert out.sample_rate == x.sample_rate


def test_trace_complete_with_gv(speech, stats):
    x = speech(28, 0.8)
    out, tr = convert_utterance(x, ConversionConfig(), identity_converter(),
                                stats, stats)
    for name in ("sig_wx", "res_wx", "res_y", "mcp_wx", "mcp_y", "mcp_y_gv",
                 "mcp_y_sub", "env_w", "env_gv", "sig_y_w", "sig_y_gv",
                 "sig_y_sub"):
        assert getattr(tr, name) is not None, name
    assert isinstance(tr.flagged, set)
    assert power(out) == pytest.approx(power(x), rel=1e-9)


# ---------------------------------------------------------------------------
# file formats


def test_mcep_file_round_trip(tmp_path):
    rng = np.random.default_rng(5)
    frames = rng.standard_normal((7, 36)).astype(np.float32).astype(np.float64)
    mc = MelCepstrumSequence(frames, 0.455, 0.005, RATE)
    path = tmp_path / "a.mcp"
    save_mcep(mc, path)
    back = load_mcep(path, RATE)
    assert np.array_equal(back.frames, frames)
    assert back.alpha == 0.455 and back.frame_shift_s == 0.005
    assert back.sample_rate == RATE


def test_mcep_file_errors(tmp_path):
    good = tmp_path / "good.mcp"
    save_mcep(MelCepstrumSequence(np.zeros((2, 3)), 0.455, 0.005, RATE), good)
    data = good.read_bytes()
    bad = tmp_path / "bad.mcp"
    bad.write_bytes(b"XXXXX" + data[5:])
    with pytest.raises(FormatError, match="magic"):
        load_mcep(bad, RATE)
    bad.write_bytes(data[:12])
    with pytest.raises(FormatError, match="truncated"):
        load_mcep(bad, RATE)
    bad.write_bytes(data[:-4])
    with pytest.raises(FormatError, match="bytes"):
        load_mcep(bad, RATE)


_STATS_TEXT = ("logf0_mean = 4.7\nlogf0_var = 0.02\n"
               "mcep_mean = 0 0 0\nmcep_var = 1 1 1\ngv = 0 1 1\n")


def test_stats_file_round_trip(tmp_path, stats):
    path = tmp_path / "s.stats"
    save_stats(stats, path)
    back = load_stats(path)
    assert back.logf0_mean == stats.logf0_mean
    assert back.logf0_var == stats.logf0_var
    assert np.array_equal(back.mcep_mean, stats.mcep_mean)
    assert np.array_equal(back.mcep_var, stats.mcep_var)
    assert np.array_equal(back.gv, stats.gv)


def test_stats_file_tolerates_comments(tmp_path):
    p = tmp_path / "s.stats"
    p.write_text("# speaker A\n\n" + _STATS_TEXT)
    assert load_stats(p).logf0_mean == 4.7


def test_stats_file_errors(tmp_path):
    p = tmp_path / "s.stats"
    p.write_text(_STATS_TEXT + "gv = 0 1 1\n")
    with pytest.raises(FormatError, match="duplicate"):
        load_stats(p)
    p.write_text(_STATS_TEXT + "extra = 1\n")
    with pytest.raises(FormatError, match="unknown"):
        load_stats(p)
    p.write_text("logf0_mean = 4.7\n")
    with pytest.raises(FormatError, match="missing"):
        load_stats(p)
    p.write_text(_STATS_TEXT.replace("logf0_var = 0.02", "logf0_var 0.02"))
    with pytest.raises(FormatError, match="key"):
        load_stats(p)
    p.write_text(_STATS_TEXT.replace("0.02", "zero"))
    with pytest.raises(FormatError, match="bad number"):
        load_stats(p)
    p.write_text(_STATS_TEXT.replace("logf0_var = 0.02",
                                     "logf0_var = 0.02 0.03"))
    with pytest.raises(FormatError, match="single number"):
        load_stats(p)


def test_envelope_file_round_trip(tmp_path):
    rng = np.random.default_rng(6)
    env = EnvelopeSignal(rng.uniform(0, 100, 50), RATE, 256)
    path = tmp_path / "e.txt"
    save_envelope(env, path)
    back = load_envelope(path, RATE, 256)
    assert np.array_equal(back.values, env.values)
    assert back.sample_rate == RATE and back.slot_length == 256


def test_envelope_file_errors(tmp_path):
    p = tmp_path / "e.txt"
    p.write_text("0 1.0\n2 2.0\n")
    with pytest.raises(FormatError, match="order"):
        load_envelope(p, RATE, 256)
    p.write_text("0 1.0 9\n")
    with pytest.raises(FormatError, match="two columns"):
        load_envelope(p, RATE, 256)


def test_f0_file_round_trip(tmp_path):
    f0 = F0Contour(np.array([0.0, 110.0, 112.5, 0.0]), 0.005)
    path = tmp_path / "f.f0"
    save_f0(f0, path)
    back = load_f0(path, 0.005)
    assert np.array_equal(back.values, f0.values)
    bad = tmp_path / "bad.f0"
    bad.write_text("110\nnope\n")
    with pytest.raises(FormatError):
        load_f0(bad, 0.005)


def test_write_trace_files(tmp_path, speech, stats):
    x = speech(29, 0.6)
    _, tr = convert_utterance(x, ConversionConfig(), identity_converter(),
                              stats, stats)
    d = tmp_path / "trace"
    write_trace(tr, d)
    expected = {"sig_wx.wav", "res_wx.npy", "res_y.npy", "mcp_wx.mcp",
                "mcp_y.mcp", "mcp_y_GV.mcp", "mcp_y_SUB.mcp", "env_W.txt",
                "env_GV.txt", "flagged.txt", "sig_y_W.wav", "sig_y_GV.wav",
                "sig_y_SUB.wav"}
    assert {p.name for p in d.iterdir()} == expected


# ---------------------------------------------------------------------------
# command line


def _wav(tmp_path, name, w):
    path = tmp_path / name
    write_wav(w, path)
    return str(path)


def test_cli_analyze(tmp_path, speech):
    inp = _wav(tmp_path, "in.wav", speech(30, 0.6))
    mcp = tmp_path / "out.mcp"
    f0p = tmp_path / "out.f0"
    rc = main(["analyze", "--in", inp, "--out-mcep", str(mcp),
               "--out-f0", str(f0p)])
    assert rc == 0
    mc = load_mcep(mcp, RATE)
    assert mc.order == 35 and len(mc) > 0
    f0 = load_f0(f0p, 0.005)
    assert f0.voiced_mask.sum() > 0


def test_cli_analyze_usage(tmp_path, speech):
    inp = _wav(tmp_path, "in.wav", speech(30, 0.3))
    assert main(["analyze", "--in", inp]) == 1
    assert main(["analyze", "--in", inp, "--out-f0",
                 str(tmp_path / "x.f0"), "--frame-shift", "0"]) == 1


def test_cli_stats(tmp_path):
    d = tmp_path / "wavs"
    d.mkdir()
    for i in range(2):
        write_wav(make_speech(40 + i, 0.8), d / f"u{i}.wav")
    out = tmp_path / "sp.stats"
    assert main(["stats", "--wav-dir", str(d), "--out", str(out)]) == 0
    st = load_stats(out)
    assert st.mcep_mean.size == 36


def test_cli_stats_errors(tmp_path):
    empty = tmp_path / "empty"
    empty.mkdir()
    out = str(tmp_path / "x.stats")
    assert main(["stats", "--wav-dir", str(empty), "--out", out]) == 2
    assert main(["stats", "--wav-dir", str(tmp_path / "nope"), "--out", out]) == 1


def test_cli_convert_basic(tmp_path, speech, capsys):
    inp = _wav(tmp_path, "in.wav", speech(41, 0.8))
    outp = tmp_path / "out.wav"
    assert main(["convert", "--in", inp, "--out", str(outp)]) == 0
    assert "variance postfilter disabled" in capsys.readouterr().err
    x = read_wav(inp)
    y = read_wav(outp)
    # power is matched in float, then 16-bit rounding perturbs the sum of
    # squares by a cross term of order 2*sqrt(P/12)
    assert power(y) == pytest.approx(power(x), rel=1e-5)


def test_cli_convert_full(tmp_path, speech):
    inp = _wav(tmp_path, "in.wav", speech(42, 0.8))
    d = tmp_path / "wavs"
    d.mkdir()
    write_wav(make_speech(43, 0.8), d / "a.wav")
    sp = tmp_path / "sp.stats"
    assert main(["stats", "--wav-dir", str(d), "--out", str(sp)]) == 0
    f0p = tmp_path / "in.f0"
    assert main(["analyze", "--in", inp, "--out-f0", str(f0p)]) == 0
    outp = tmp_path / "out.wav"
    tdir = tmp_path / "trace"
    rc = main(["convert", "--in", inp, "--out", str(outp),
               "--src-stats", str(sp), "--tgt-stats", str(sp),
               "--f0-file", str(f0p), "--trace-dir", str(tdir)])
    assert rc == 0
    assert (tdir / "sig_y_SUB.wav").exists()
    assert (tdir / "flagged.txt").exists()
    x = read_wav(inp)
    y = read_wav(outp)
    assert power(y) == pytest.approx(power(x), rel=1e-5)


def test_cli_convert_external(tmp_path, speech):
    inp = _wav(tmp_path, "in.wav", speech(45, 0.6))
    out1 = tmp_path / "o1.wav"
    tdir = tmp_path / "tr"
    assert main(["convert", "--in", inp, "--out", str(out1),
                 "--trace-dir", str(tdir)]) == 0
    out2 = tmp_path / "o2.wav"
    rc = main(["convert", "--in", inp, "--out", str(out2),
               "--converter", "external",
               "--converted-features", str(tdir / "mcp_y.mcp")])
    assert rc == 0
    # the same features over the same residual, up to the f32 rounding the
    # feature file imposes: outputs agree to within one quantization step
    a = read_wav(out1).samples
    b = read_wav(out2).samples
    assert len(a) == len(b)
    assert np.max(np.abs(a - b)) <= 2.0


def test_cli_convert_usage_errors(tmp_path, speech):
    inp = _wav(tmp_path, "in.wav", speech(44, 0.3))
    out = str(tmp_path / "o.wav")
    sp = str(tmp_path / "sp.stats")  # never created; flag checks come first
    assert main(["convert", "--in", inp, "--out", out, "--src-stats", sp]) == 1
    assert main(["convert", "--in", inp, "--out", out,
                 "--converter", "meanvar"]) == 1
    assert main(["convert", "--in", inp, "--out", out,
                 "--converter", "external"]) == 1
    assert main(["convert", "--in", inp, "--out", out,
                 "--converted-features", "x.mcp"]) == 1
    assert main(["convert", "--in", inp, "--out", out,
                 "--threshold", "-3"]) == 1
    assert main(["convert", "--in", inp, "--out", out, "--f0-ratio", "9"]) == 1
    assert main(["convert", "--in", str(tmp_path / "missing.wav"),
                 "--out", out]) == 2


def test_cli_detect(tmp_path, capsys):
    n = 4000
    t = np.arange(n) / RATE
    base = 1000.0 * np.sin(2 * np.pi * 300 * t)
    burst = base.copy()
    burst[1500:2000] *= 15.0
    rp = _wav(tmp_path, "ref.wav", Waveform(base, RATE))
    tp = _wav(tmp_path, "test.wav", Waveform(burst, RATE))
    assert main(["detect", "--ref", rp, "--test", tp]) == 0
    flagged = [int(s) for s in capsys.readouterr().out.split()]
    assert flagged == sorted(flagged)
    assert 1750 // 110 in flagged


def test_cli_detect_usage(tmp_path):
    rc = main(["detect", "--ref", "a.wav", "--test", "b.wav",
               "--frame-shift", "0"])
    assert rc == 1
    rc = main(["detect", "--ref", "a.wav", "--test", "b.wav", "--slot", "2"])
    assert rc == 1


def test_cli_help_and_bad_usage(capsys):
    assert main(["--help"]) == 0
    capsys.readouterr()
    assert main(["bogus"]) == 1
    assert main([]) == 1


def test_console_script_smoke():
    assert shutil.which("resvc") is not None
    proc = subprocess.run([sys.executable, "-m", "resvc", "--help"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert "convert" in proc.stdout and "detect" in proc.stdout
