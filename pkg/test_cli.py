"""
Test suite for run configuration and the command-line surface
Config parsing, exit codes, on-disk artifacts and CSV reports
"""

import io
import logging
import os
import sys
import tempfile
from contextlib import redirect_stderr
from pathlib import Path

import numpy as np
import pandas as pd

from anomap.cli import load_dataset, main
from anomap.config import RunConfig, load_run_config
from anomap.errors import ConfigError
from anomap.logging_config import setup_logging
from anomap.models import Volume3D
from anomap.parallel import thread_count
from anomap.scoring import ScoreMethod, SigmaSet, score_volume
from anomap.sweep import sigma_sweep
from anomap.volgrid import mvol_size, read_mask, read_volume, write_mvol

SMALL = """\
# small desk-scale run
dims=24,24,12
seed=42
lesion_radius=2
lesions_per_case=1
sigma_set=0.5,1.0
"""

NO_FILTER = "median_kernel=1\nerosion_iterations=0\nmin_component_size=0\n"


def _raises(exc, fn, *args):
    try:
        fn(*args)
    except exc:
        return
    raise AssertionError(f"{exc.__name__} not raised")


def _write(path, text):
    Path(path).write_text(text, encoding="utf-8")
    return str(path)


def _run(*argv):
    """Run the CLI, returning (exit code, captured diagnostics)."""
    buf = io.StringIO()
    with redirect_stderr(buf):
        code = main([str(a) for a in argv])
    return code, buf.getvalue()


def _read_csv(path):
    return pd.read_csv(path, dtype=str, keep_default_na=False)


def test_run_config():
    print("🧪 Testing run config parsing...")
    cfg = load_run_config(None)
    assert cfg == RunConfig()
    assert cfg.sigmas().sigmas == (0.3, 0.5, 0.7, 0.9, 1.1, 1.3, 1.5, 1.7)
    assert cfg.postprocess().median_kernel == 5 and cfg.search().num_candidates == 100
    snap = cfg.snapshot()
    assert snap["sigma_set"] == "0.3,0.5,0.7,0.9,1.1,1.3,1.5,1.7" and snap["median_first"] == "true"

    with tempfile.TemporaryDirectory() as tmp:
        path = _write(
            Path(tmp) / "run.cfg",
            "sigma_set=0.5, 1.5\nweight_mode=scalar\nmedian_first=false\ndims=24,24,12\n"
            "lesions=12:12:6:2:0.3:0;10:12:6:1:0:0.2\nk1=0.02\n",
        )
        cfg = load_run_config(path)
        assert cfg.sigmas().sigmas == (0.5, 1.5)
        assert cfg.weight_mode == "scalar" and cfg.median_first is False
        assert cfg.constants().c1 == (0.02 * 1.0) ** 2
        spec = cfg.phantom_spec()
        assert spec.dims == (24, 24, 12) and len(spec.lesions) == 2
        assert spec.lesions[1].texture_amplitude == 0.2 and spec.lesions[1].intensity_offset == 0.0
        print("  ✅ Values parse into typed settings")

        again = load_run_config(_write(Path(tmp) / "snap.cfg", "\n".join(f"{k}={v}" for k, v in cfg.snapshot().items())))
        assert again.snapshot() == cfg.snapshot()
        print("  ✅ A snapshot reloads to the same config")

        for bad in ("colour=blue\n", "median_kernel=abc\n", "median_kernel=4\n", "seed=\n",
                    "weight_mode=bogus\n", "sigma_set=0.5,0.3\n", "median_first=maybe\n", "dims=4,4\n"):
            _raises(ConfigError, load_run_config, _write(Path(tmp) / "bad.cfg", bad))
        _raises(OSError, load_run_config, Path(tmp) / "missing.cfg")
        print("  ✅ Unknown keys, bad values and broken invariants raise ConfigError")


def test_thread_count():
    print("🧪 Testing ANOMAP_THREADS...")
    saved = os.environ.get("ANOMAP_THREADS")
    try:
        os.environ["ANOMAP_THREADS"] = "3"
        assert thread_count() == 3
        for bad in ("abc", "0", "-2"):
            os.environ["ANOMAP_THREADS"] = bad
            assert thread_count() == (os.cpu_count() or 1)
    finally:
        if saved is None:
            os.environ.pop("ANOMAP_THREADS", None)
        else:
            os.environ["ANOMAP_THREADS"] = saved
    print("  ✅ Positive integers are honoured, anything else falls back")


def test_logging_setup():
    print("🧪 Testing logging setup...")
    root = logging.getLogger()
    saved = (root.level, list(root.handlers))
    try:
        setup_logging(level="INFO")
        assert logging.getLogger("numexpr").level == logging.WARNING
        assert len(root.handlers) == 1 and root.handlers[0].stream is sys.stderr
        setup_logging(level="DEBUG")
        assert logging.getLogger("numexpr").level == logging.INFO
        assert len(root.handlers) == 1
        assert logging.getLogger("matplotlib").level == logging.NOTSET
    finally:
        for h in list(root.handlers):
            root.removeHandler(h)
        root.setLevel(saved[0])
        for h in saved[1]:
            root.addHandler(h)
    print("  ✅ One stderr handler; numexpr quietened below DEBUG")


def test_phantom_command():
    print("🧪 Testing `phantom`...")
    with tempfile.TemporaryDirectory() as tmp:
        cfg = _write(Path(tmp) / "run.cfg", SMALL)
        code, _ = _run("phantom", Path(tmp) / "a", "--config", cfg)
        assert code == 0
        for name in ("healthy", "unhealthy", "rec"):
            assert os.path.getsize(Path(tmp) / "a" / f"{name}.mvol") == mvol_size((24, 24, 12))
        for name in ("gt", "brain"):
            assert os.path.getsize(Path(tmp) / "a" / f"{name}.mvol") == mvol_size((24, 24, 12), mask=True)
        assert _run("phantom", Path(tmp) / "b", "--config", cfg)[0] == 0
        for name in ("healthy", "unhealthy", "gt", "brain", "rec"):
            assert (Path(tmp) / "a" / f"{name}.mvol").read_bytes() == (Path(tmp) / "b" / f"{name}.mvol").read_bytes()
        print("  ✅ Five files with header + payload sizes; re-runs are bitwise identical")

        code, _ = _run("phantom", Path(tmp) / "fam", "--cases", 4, "--config", cfg)
        assert code == 0
        lines = (Path(tmp) / "fam" / "manifest.tsv").read_text().splitlines()
        assert len(lines) == 4
        assert lines[0].split("\t") == ["val", "case_00/unhealthy.mvol", "case_00/rec.mvol", "case_00/gt.mvol", "case_00/brain.mvol"]
        assert lines[1].startswith("test\tcase_01/")
        print("  ✅ --cases writes case directories and a manifest")

        outside = _write(Path(tmp) / "outside.cfg", SMALL + "lesions=1:1:1:2:0.3:0\n")
        code, err = _run("phantom", Path(tmp) / "c", "--config", outside)
        assert code == 1 and "lesion 0" in err

        blocker = _write(Path(tmp) / "blocker", "not a directory")
        assert _run("phantom", Path(blocker) / "sub", "--config", cfg)[0] == 2
        assert _run("phantom", Path(tmp) / "d", "--config", Path(tmp) / "nope.cfg")[0] == 2
        assert _run("phantom", Path(tmp) / "e", "--config", _write(Path(tmp) / "bad.cfg", "colour=blue\n"))[0] == 1
        print("  ✅ Invalid input exits 1, I/O failures exit 2")


def test_score_command():
    print("🧪 Testing `score`...")
    with tempfile.TemporaryDirectory() as tmp:
        d = Path(tmp)
        cfg = _write(d / "run.cfg", SMALL)
        assert _run("phantom", d / "p", "--config", cfg)[0] == 0
        x, rec, brain = d / "p" / "unhealthy.mvol", d / "p" / "rec.mvol", d / "p" / "brain.mvol"

        assert _run("score", "--x", x, "--rec", x, "--brain", brain, "--method", "l1", "--out", d / "zero.mvol")[0] == 0
        assert read_volume(d / "zero.mvol").data.max() == 0.0

        assert _run("score", "--x", x, "--rec", rec, "--brain", brain, "--method", "ssim:1.0", "--out", d / "s1.mvol")[0] == 0
        single = _write(d / "single.cfg", "sigma_set=1.0\n")
        assert _run("score", "--x", x, "--rec", rec, "--brain", brain, "--method", "ssim-ens",
                    "--out", d / "ens.mvol", "--config", single)[0] == 0
        assert (d / "s1.mvol").read_bytes() == (d / "ens.mvol").read_bytes()
        assert (d / "s1.mvol.method").read_text() == "method=ssim:1\n"
        print("  ✅ l1 of identical inputs is zero; ssim:1.0 equals ssim-ens over {1.0}")

        direct = score_volume(ScoreMethod.parse("ssim-ens"), read_volume(x), read_volume(rec), SigmaSet((0.5, 1.0)))
        assert _run("score", "--x", x, "--rec", rec, "--brain", brain, "--method", "ssim-ens",
                    "--out", d / "ens2.mvol", "--config", cfg)[0] == 0
        assert read_volume(d / "ens2.mvol") == direct
        print("  ✅ Map file reads back equal to the library call")

        assert _run("score", "--x", x, "--rec", rec, "--brain", brain, "--method", "l7", "--out", d / "o.mvol")[0] == 1
        other = d / "other.mvol"
        write_mvol(Volume3D((4, 4, 4), (1.0, 1.0, 1.0), np.zeros(64)), other)
        assert _run("score", "--x", x, "--rec", other, "--brain", brain, "--method", "l1", "--out", d / "o.mvol")[0] == 1
        assert _run("score", "--x", brain, "--rec", rec, "--brain", brain, "--method", "l1", "--out", d / "o.mvol")[0] == 1
        assert _run("score", "--x", d / "nope.mvol", "--rec", rec, "--brain", brain, "--method", "l1", "--out", d / "o.mvol")[0] == 2
        print("  ✅ Unknown method, dimension mismatch and wrong kinds exit 1; missing files exit 2")


def _family(d, cfg_text, cases=4):
    cfg = _write(d / "run.cfg", cfg_text)
    assert _run("phantom", d / "fam", "--cases", cases, "--config", cfg)[0] == 0
    return cfg


def _write_maps(d, cases, make_map, method=None):
    rows, split = [], []
    for c in cases:
        path = d / f"{c.volume_id}_map.mvol"
        write_mvol(make_map(c), path)
        if method is not None:
            (d / f"{c.volume_id}_map.mvol.method").write_text(f"method={method}\n")
        rows.append(f"{c.volume_id}\t{path.name}\tfam/{c.volume_id}/gt.mvol\tfam/{c.volume_id}/brain.mvol")
        split.append(f"{c.volume_id}\t{c.role}")
    return _write(d / "maps.tsv", "\n".join(rows) + "\n"), _write(d / "split.tsv", "\n".join(split) + "\n")


def test_evaluate_command():
    print("🧪 Testing `evaluate`...")
    with tempfile.TemporaryDirectory() as tmp:
        d = Path(tmp)
        cfg = _family(d, SMALL + NO_FILTER)
        cases = load_dataset(d / "fam")

        manifest, split = _write_maps(d, cases, lambda c: Volume3D(c.gt.dims, c.gt.spacing, c.gt.data.astype(np.float32)))
        code, _ = _run("evaluate", "--manifest", manifest, "--split", split, "--method", "l1", "--out", d / "perfect.csv", "--config", cfg)
        assert code == 0
        df = _read_csv(d / "perfect.csv")
        assert list(df.columns) == ["method", "sigma", "threshold", "dataset_dice", "volume_id", "volume_dice"]
        assert df["volume_id"].tolist() == ["case_01", "case_03"]
        assert set(df["dataset_dice"]) == {"1"} and set(df["volume_dice"]) == {"1"}
        assert set(df["sigma"]) == {""}
        print("  ✅ Truth used as the map scores Dice 1")

        manifest, split = _write_maps(d, cases, lambda c: Volume3D(c.gt.dims, c.gt.spacing, np.zeros(c.gt.data.shape)))
        code, _ = _run("evaluate", "--manifest", manifest, "--split", split, "--method", "l1", "--out", d / "zero.csv", "--config", cfg)
        assert code == 0 and set(_read_csv(d / "zero.csv")["dataset_dice"]) == {"0"}
        print("  ✅ All-zero maps score Dice 0")

        assert _run("evaluate", "--manifest", manifest, "--split", split, "--out", d / "x.csv")[0] == 1
        _write(d / "val_only.tsv", "".join(f"{c.volume_id}\tval\n" for c in cases))
        assert _run("evaluate", "--manifest", manifest, "--split", d / "val_only.tsv", "--method", "l1", "--out", d / "x.csv")[0] == 1
        print("  ✅ Missing method and one-sided splits exit 1")

        sigmas = SigmaSet((0.5, 1.0))
        report = sigma_sweep(cases, sigmas, load_run_config(cfg).constants(), load_run_config(cfg).postprocess())
        ssim1 = ScoreMethod.parse("ssim:1")
        manifest, split = _write_maps(
            d, cases, lambda c: score_volume(ssim1, c.x, c.rec, sigmas), method="ssim:1"
        )
        assert _run("evaluate", "--manifest", manifest, "--split", split, "--out", d / "ssim.csv", "--config", cfg)[0] == 0
        df = _read_csv(d / "ssim.csv")
        expected = report.singles[1]
        assert set(df["method"]) == {"ssim"} and set(df["sigma"]) == {"1"}
        assert set(df["dataset_dice"]) == {f"{expected.dataset_dice:.6g}"}
        assert set(df["threshold"]) == {f"{expected.threshold:.6g}"}
        print("  ✅ Sidecar method is picked up; Dice matches the library sweep")


def test_sweep_command():
    print("🧪 Testing `sweep`...")
    with tempfile.TemporaryDirectory() as tmp:
        d = Path(tmp)
        cfg = _family(d, SMALL)
        assert _run("sweep", d / "fam", "--out", d / "curve.csv", "--config", cfg)[0] == 0
        df = _read_csv(d / "curve.csv")
        assert list(df.columns) == ["method", "sigma", "dataset_dice", "threshold"]
        assert df["method"].tolist() == ["ssim", "ssim", "ssim-ens", "l1"]
        assert df["sigma"].tolist() == ["0.5", "1", "", ""]

        run_cfg = load_run_config(cfg)
        cases = load_dataset(d / "fam")
        assert [c.volume_id for c in cases] == ["case_00", "case_01", "case_02", "case_03"]
        report = sigma_sweep(cases, run_cfg.sigmas(), run_cfg.constants(), run_cfg.postprocess(), run_cfg.search())
        assert df["dataset_dice"].tolist() == [f"{r.dataset_dice:.6g}" for r in report.results]
        assert df["threshold"].tolist() == [f"{r.threshold:.6g}" for r in report.results]
        print("  ✅ CSV rows equal the library sweep")

        assert _run("sweep", d / "fam", "--out", d / "curve2.csv", "--config", cfg)[0] == 0
        assert (d / "curve.csv").read_bytes() == (d / "curve2.csv").read_bytes()
        print("  ✅ Re-runs write identical CSV bytes")

        single = _write(d / "single.cfg", SMALL.replace("sigma_set=0.5,1.0", "sigma_set=1.0"))
        assert _run("sweep", d / "fam", "--out", d / "one.csv", "--config", single)[0] == 0
        df = _read_csv(d / "one.csv")
        assert len(df) == 3 and df["dataset_dice"][0] == df["dataset_dice"][1]
        print("  ✅ Singleton sigma set gives 3 rows with equal sigma and ensemble Dice")

        assert _run("sweep", d / "nowhere", "--out", d / "x.csv")[0] == 2
        gt = read_mask(d / "fam" / "case_00" / "gt.mvol")
        assert gt.count() > 0


def run_all_tests():
    print("=" * 60)
    print("🧪 config + CLI test suite")
    print("=" * 60 + "\n")
    results = []
    for name, fn in [
        ("Run config", test_run_config),
        ("Threads", test_thread_count),
        ("Logging", test_logging_setup),
        ("phantom", test_phantom_command),
        ("score", test_score_command),
        ("evaluate", test_evaluate_command),
        ("sweep", test_sweep_command),
    ]:
        try:
            fn()
            results.append((name, True))
        except Exception as e:
            print(f"❌ {name} test failed: {e}\n")
            results.append((name, False))

    print("=" * 60)
    for name, passed in results:
        print(f"  {name:20} {'✅ PASSED' if passed else '❌ FAILED'}")
    passed = sum(1 for _, p in results if p)
    print(f"Total: {passed}/{len(results)} tests passed")
    return 0 if passed == len(results) else 1


if __name__ == "__main__":
    sys.exit(run_all_tests())
