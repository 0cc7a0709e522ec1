import json

import numpy as np
import pytest

from apirnet.cli import EXIT_COMPUTE, EXIT_IO, EXIT_OK, EXIT_VALIDATION, build_parser, main
from apirnet.io import grid_nbytes, read_grid, read_json, read_mask, read_masks, read_pgm, read_real, write_grid
from apirnet.kspace import ComplexGrid


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def sim(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert run("simulate", "--shape", "32x32", "--coils", "4", "--out", root / "sim") == EXIT_OK
    assert run("subsample", "--kspace", root / "sim" / "kspace", "--acs", "12x12", "--out", root / "sub") == EXIT_OK
    return root


class TestSimulate:
    def test_default_run_emits_three_artifacts(self, tmp_path):
        assert run("simulate", "--out", tmp_path) == EXIT_OK
        stems = {p.name.split(".")[0] for p in tmp_path.iterdir()} - {"manifest"}
        assert stems == {"kspace", "truth", "support"}
        assert read_grid(tmp_path / "kspace").shape == (8, 64, 64)

    def test_same_seed_identical_files(self, tmp_path):
        run("simulate", "--shape", "16x16", "--seed", "3", "--out", tmp_path / "a")
        run("simulate", "--shape", "16x16", "--seed", "3", "--out", tmp_path / "b")
        for name in ("kspace.c64", "truth.c64", "support.u8"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_sizes_match_headers(self, sim):
        for stem in ("kspace", "truth"):
            header = read_json(sim / "sim" / f"{stem}.json")
            assert (sim / "sim" / f"{stem}.c64").stat().st_size == grid_nbytes(header)
        assert (sim / "sim" / "support.u8").stat().st_size == 32 * 32

    def test_spec_file(self, tmp_path):
        spec = {"shape": [16, 16], "kind": "disk-phantom", "radius": 4.0}
        (tmp_path / "spec.json").write_text(json.dumps(spec))
        assert run("simulate", "--spec", tmp_path / "spec.json", "--coils", "2", "--out", tmp_path / "o") == EXIT_OK
        assert read_mask(tmp_path / "o" / "support").sum() == 49

    def test_bad_spec(self, tmp_path):
        (tmp_path / "spec.json").write_text(json.dumps({"shape": [16, 16], "radius": -2}))
        assert run("simulate", "--spec", tmp_path / "spec.json", "--out", tmp_path / "o") == EXIT_VALIDATION


class TestSubsample:
    def test_reference_geometry(self, tmp_path, sim):
        run("simulate", "--shape", "64x64", "--coils", "2", "--out", tmp_path / "s")
        assert run("subsample", "--kspace", tmp_path / "s" / "kspace", "--accel", "2x2", "--acs", "25x25",
                   "--out", tmp_path / "o") == EXIT_OK
        masks = read_masks(tmp_path / "o" / "masks")
        n_sampled = sum(
            1 for i in range(64) for j in range(64)
            if (i % 2 == 0 and j % 2 == 0) or (20 <= i < 45 and 20 <= j < 45)
        )
        assert masks.m_sampled.sum() == n_sampled
        assert masks.m_acs.sum() == 625
        manifest = read_json(tmp_path / "o" / "manifest.json")
        assert manifest["results"]["sampled"] == n_sampled

    def test_accel_one_is_pass_through(self, tmp_path, sim):
        assert run("subsample", "--kspace", sim / "sim" / "kspace", "--accel", "1x1", "--acs", "0x0",
                   "--sigma", "0", "--out", tmp_path) == EXIT_OK
        assert (tmp_path / "kspace.c64").read_bytes() == (tmp_path / "full.c64").read_bytes()

    def test_bad_pair(self, tmp_path, sim):
        assert run("subsample", "--kspace", sim / "sim" / "kspace", "--accel", "2by2", "--out", tmp_path) \
            == EXIT_VALIDATION


class TestReconstruct:
    def test_zero_filled_full_sampling_is_reference(self, tmp_path, sim):
        run("subsample", "--kspace", sim / "sim" / "kspace", "--accel", "1x1", "--acs", "0x0", "--sigma", "0",
            "--out", tmp_path / "s")
        assert run("reconstruct", "--method", "zero", "--kspace", tmp_path / "s" / "kspace",
                   "--masks", tmp_path / "s" / "masks", "--out", tmp_path / "r") == EXIT_OK
        assert np.array_equal(read_real(tmp_path / "r" / "image"), read_real(tmp_path / "s" / "reference"))

    def test_grappa_lambda_sweep(self, tmp_path, sim):
        norms = []
        for lam in ("0", "1e-4", "1e-2", "1"):
            out = tmp_path / lam
            assert run("reconstruct", "--method", "grappa", "--lambda", lam, "--kernel", "1x3x3",
                       "--kspace", sim / "sub" / "kspace", "--masks", sim / "sub" / "masks", "--out", out) == EXIT_OK
            norms.append(read_json(out / "manifest.json")["results"]["weight_norm"])
            assert (out / "kernel.f32").exists()
        assert all(b <= a for a, b in zip(norms, norms[1:]))

    def test_apirnet_checkpoints_and_replay(self, tmp_path, sim):
        sched = [{"region": [8, 8], "lr": 1e-3, "epochs": 4}, {"region": [32, 32], "lr": 1e-4, "epochs": 2}]
        (tmp_path / "sched.json").write_text(json.dumps(sched))
        argv = ["reconstruct", "--method", "apirnet", "--widths", "16,12", "--schedule", tmp_path / "sched.json",
                "--kspace", sim / "sub" / "kspace", "--masks", sim / "sub" / "masks", "--out", tmp_path / "a"]
        assert run(*argv) == EXIT_OK
        ck = tmp_path / "a" / "checkpoints"
        assert {p.name for p in ck.iterdir()} >= {"level1.json", "level2.f64", "final.json"}
        training = read_json(tmp_path / "a" / "manifest.json")["results"]["training"]
        assert [len(t) for t in training["losses"]] == [4, 2]
        assert run("--manifest", tmp_path / "a" / "manifest.json", "--out", tmp_path / "b") == EXIT_OK
        assert (tmp_path / "a" / "image.c64").read_bytes() == (tmp_path / "b" / "image.c64").read_bytes()
        assert (ck / "final.f64").read_bytes() == (tmp_path / "b" / "checkpoints" / "final.f64").read_bytes()

    def test_calibration_failure_is_compute_error(self, tmp_path, sim, capsys):
        run("subsample", "--kspace", sim / "sim" / "kspace", "--acs", "1x8", "--out", tmp_path / "s")
        assert run("reconstruct", "--method", "grappa", "--lambda", "0.1", "--kernel", "1x3x3",
                   "--kspace", tmp_path / "s" / "kspace", "--masks", tmp_path / "s" / "masks",
                   "--out", tmp_path / "r") == EXIT_COMPUTE
        assert "ACS" in capsys.readouterr().err

    def test_missing_input_before_compute(self, tmp_path, sim):
        assert run("reconstruct", "--kspace", tmp_path / "nope", "--masks", sim / "sub" / "masks",
                   "--out", tmp_path / "r") == EXIT_IO
        assert not (tmp_path / "r").exists()


class TestEvaluateAndImages:
    def test_evaluate(self, tmp_path, sim, capsys):
        run("reconstruct", "--method", "zero", "--kspace", sim / "sub" / "kspace", "--masks", sim / "sub" / "masks",
            "--out", tmp_path / "z")
        capsys.readouterr()
        assert run("evaluate", "--image", tmp_path / "z" / "image", "--reference", sim / "sub" / "reference",
                   "--region", sim / "sim" / "support", "--out", tmp_path / "e") == EXIT_OK
        printed = json.loads(capsys.readouterr().out)
        support = read_mask(sim / "sim" / "support")
        diff = read_real(tmp_path / "z" / "image") - read_real(sim / "sub" / "reference")
        assert printed["mse"] == pytest.approx(np.mean(diff[support] ** 2), rel=1e-12)
        assert read_json(tmp_path / "e" / "metrics.json") == printed

    def test_noisemap(self, tmp_path, sim, capsys):
        sub = sim / "sub"
        assert run("noisemap", "--method", "grappa", "--lambda", "0.01", "--kernel", "1x3x3", "--kspace",
                   sub / "full", "--masks", sub / "masks", "--support", sim / "sim" / "support",
                   "--replicas", "4", "--out", tmp_path) == EXIT_OK
        summary = json.loads(capsys.readouterr().out)
        amp = read_real(tmp_path / "amplification")
        assert summary["amplification_mean"] > 0 and np.all(amp >= 0)
        assert read_pgm(tmp_path / "amplification.pgm").shape == (32, 32)

    def test_compare(self, tmp_path, sim):
        sub = sim / "sub"
        assert run("compare", "--methods", "zero,grappa:0.01", "--kernel", "1x3x3", "--kspace", sub / "full",
                   "--masks", sub / "masks", "--support", sim / "sim" / "support", "--out", tmp_path) == EXIT_OK
        report = read_json(tmp_path / "report.json")
        assert [r["method"] for r in report["methods"]] == ["zero", "grappa-lam0.01"]

    def test_emit_image_window(self, tmp_path):
        img = np.linspace(0, 1, 16).reshape(4, 4)
        write_grid(tmp_path / "g", ComplexGrid(img[None].astype(complex), "image"))
        assert run("emit-image", "--grid", tmp_path / "g", "--window", "0:1", "--output", tmp_path / "g.pgm") == 0
        raster = read_pgm(tmp_path / "g.pgm")
        np.testing.assert_array_equal(raster, np.rint(img * 65535).astype(np.uint16))

    def test_emit_image_constant(self, tmp_path):
        write_grid(tmp_path / "c", ComplexGrid(np.full((1, 3, 3), 2.0 + 0j), "image"))
        assert run("emit-image", "--grid", tmp_path / "c", "--output", tmp_path / "c.pgm") == EXIT_OK
        assert len(set(read_pgm(tmp_path / "c.pgm").ravel())) == 1

    def test_emit_image_bad_window(self, tmp_path):
        assert run("emit-image", "--grid", tmp_path / "x", "--window", "5", "--output", tmp_path / "x.pgm") \
            == EXIT_VALIDATION


class TestInterface:
    def test_every_option_documents_default(self):
        parser = build_parser()
        for name, sub in parser._subparsers._group_actions[0].choices.items():
            for action in sub._actions:
                if action.option_strings and not action.required and action.default not in (None, False) \
                        and action.dest != "help":
                    assert "default" in (action.help or ""), f"{name} {action.option_strings}"

    def test_threads_env(self, tmp_path, monkeypatch):
        monkeypatch.setenv("APIRNET_THREADS", "1")
        assert run("simulate", "--shape", "8x8", "--coils", "1", "--out", tmp_path) == EXIT_OK
        assert "threads" not in read_json(tmp_path / "manifest.json")["args"]

    def test_no_command(self):
        assert run() == EXIT_VALIDATION

    def test_unknown_manifest_command(self, tmp_path):
        (tmp_path / "m.json").write_text(json.dumps({"command": "explode", "args": {}}))
        assert run("--manifest", tmp_path / "m.json") == EXIT_VALIDATION
