from __future__ import annotations

import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from vexel.cli import dispatch
from vexel.codec import read_mat
from vexel.conditioning import load_features, save_features
from vexel.errors import NonFiniteLoss
from vexel.raster import read_ppm
from vexel.svg.parse import parse_svg

from conftest import CORPUS, MANIFEST, corpus_files, sha256

SVG = corpus_files()[0]
SMALL_VAE = {"preset": "tiny"}


def run(*argv) -> int:
    return dispatch([str(a) for a in argv])


@pytest.fixture(scope="module")
def models(tmp_path_factory):
    """A few-step VAE and DiT trained through the CLI."""
    root = tmp_path_factory.mktemp("models")
    assert run("train-vae", "--manifest", MANIFEST, "--config", "tiny", "--steps", 3, "-o", root / "vae", "--quiet") == 0
    assert run("train-dit", "--manifest", MANIFEST, "--vae", root / "vae", "--steps", 3, "-o", root / "dit",
               "--quiet") == 0
    return root


class TestNormalizeCommands:
    def test_clean_file_with_stats(self, tmp_path):
        assert run("clean", SVG, "-o", tmp_path / "out.svg", "--stats", tmp_path / "s.json") == 0
        doc = parse_svg((tmp_path / "out.svg").read_text())
        assert doc.canvas == 128 and doc.is_normalized()
        stats = json.loads((tmp_path / "s.json").read_text())
        assert stats["file"] == SVG.name
        assert stats["after"]["bytes"] == (tmp_path / "out.svg").stat().st_size
        assert (tmp_path / "s.png").read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"

    def test_clean_directory(self, tmp_path):
        assert run("clean", CORPUS, "-o", tmp_path / "out", "--stats", tmp_path / "all.json") == 0
        assert len(list((tmp_path / "out").glob("*.svg"))) == len(corpus_files())
        assert len(json.loads((tmp_path / "all.json").read_text())) == len(corpus_files())

    def test_stats(self, tmp_path):
        assert run("stats", SVG, "-o", tmp_path / "stats.json", "--canvas", 64) == 0
        data = json.loads((tmp_path / "stats.json").read_text())
        assert set(data) == {"file", "before", "after"}
        assert (tmp_path / "stats.png").exists()

    def test_raster(self, tmp_path):
        assert run("raster", SVG, "-o", tmp_path / "a.ppm", "--size", 32) == 0
        assert read_ppm(tmp_path / "a.ppm").width == 32

    def test_encode_decode(self, tmp_path):
        assert run("encode", SVG, "-o", tmp_path / "a.mat", "--n", 256) == 0
        assert read_mat(tmp_path / "a.mat").shape == (256, 14)
        assert run("decode", tmp_path / "a.mat", "-o", tmp_path / "back.svg") == 0
        assert run("clean", SVG, "-o", tmp_path / "ref.svg") == 0
        assert parse_svg((tmp_path / "back.svg").read_text()).elements == \
            parse_svg((tmp_path / "ref.svg").read_text()).elements

    def test_features_stub_and_import(self, tmp_path):
        assert run("features", SVG, "--stub", "-o", tmp_path / "f.vxf", "--dim", 16, "--n", 64) == 0
        assert load_features(tmp_path / "f.vxf").shape == (64, 16)
        np.save(tmp_path / "g.npy", np.ones((64, 16)))
        assert run("features", "--import", tmp_path / "g.npy", "-o", tmp_path / "g.vxf", "--dim", 16, "--n", 64) == 0
        assert np.array_equal(load_features(tmp_path / "g.vxf"), np.ones((64, 16)))
        save_features(tmp_path / "h.vxf", np.ones((64, 16)))
        assert run("features", "--import", tmp_path / "h.vxf", "-o", tmp_path / "i.vxf", "--dim", 16, "--n", 64) == 0


class TestErrors:
    @pytest.mark.parametrize("argv", [
        [], ["frobnicate"], ["raster"], ["raster", "a.svg"], ["encode", "a.svg", "-o", "x", "--n", "0"],
        ["clean", "a.svg", "-o", "x", "--precision", "-1"], ["features", "-o", "x"],
        ["sample", "--prompt", "x", "--vae", "v", "--dit", "d", "-o", "o", "--cfg", "abc"],
    ])
    def test_usage_errors_exit_1(self, argv):
        assert dispatch(argv) == 1

    def test_data_errors_exit_2(self, tmp_path):
        (tmp_path / "bad.svg").write_text("<svg")
        assert run("raster", tmp_path / "bad.svg", "-o", tmp_path / "x.ppm") == 2
        assert run("raster", tmp_path / "missing.svg", "-o", tmp_path / "x.ppm") == 2
        (tmp_path / "bad.mat").write_bytes(b"nope")
        assert run("decode", tmp_path / "bad.mat", "-o", tmp_path / "x.svg") == 2
        np.save(tmp_path / "g.npy", np.full((4, 4), np.nan))
        assert run("features", "--import", tmp_path / "g.npy", "-o", tmp_path / "g.vxf", "--dim", 4, "--n", 4) == 2
        assert run("encode", SVG, "-o", tmp_path / "a.mat", "--n", 3) == 2
        (tmp_path / "m.jsonl").write_text('{"svg": "nowhere.svg", "caption": "x"}\n')
        assert run("train-vae", "--manifest", tmp_path / "m.jsonl", "--steps", 1, "-o", tmp_path / "o") == 2
        (tmp_path / "c.json").write_text('{"bogus": 1}')
        assert run("train-vae", "--manifest", MANIFEST, "--config", tmp_path / "c.json", "--steps", 1,
                   "-o", tmp_path / "o") == 2

    def test_numeric_failure_exit_3(self, tmp_path, monkeypatch):
        import vexel.vae

        def explode(*args, **kwargs):
            raise NonFiniteLoss("non-finite VAE loss at step 1")

        monkeypatch.setattr(vexel.vae, "train_vae", explode)
        assert run("train-vae", "--manifest", MANIFEST, "--config", "tiny", "--steps", 1, "-o", tmp_path) == 3

    def test_json_errors(self, tmp_path, capsys):
        assert run("--json-errors", "raster", tmp_path / "missing.svg", "-o", tmp_path / "x.ppm") == 2
        report = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
        assert report["exit_code"] == 2 and report["error"] == "DataError" and report["message"]
        assert dispatch(["--json-errors", "nope"]) == 1
        assert json.loads(capsys.readouterr().err.strip().splitlines()[-1])["exit_code"] == 1

    def test_entry_point_process(self, tmp_path):
        proc = subprocess.run([sys.executable, "-m", "vexel", "raster", str(SVG), "-o", str(tmp_path / "a.ppm")],
                              capture_output=True)
        assert proc.returncode == 0 and (tmp_path / "a.ppm").exists()
        proc = subprocess.run([sys.executable, "-m", "vexel", "raster"], capture_output=True)
        assert proc.returncode == 1


class TestTraining:
    def test_outputs(self, models):
        for sub, header in (("vae", ["step", "lr", "mse", "kl", "total"]), ("dit", ["step", "lr", "loss"])):
            rows = list(csv.reader((models / sub / "loss.csv").open()))
            assert rows[0] == header and len(rows) == 4
            assert [int(r[0]) for r in rows[1:]] == [1, 2, 3]
            assert (models / sub / "loss.png").read_bytes()[:4] == b"\x89PNG"
            assert (models / sub / f"{sub}.vxc").read_bytes()[:4] == b"VXC1"

    def test_sample(self, models, tmp_path):
        assert run("sample", "--prompt", "circle-class", "--vae", models / "vae", "--dit", models / "dit",
                   "--steps", 5, "-o", tmp_path / "s.svg", "--png", tmp_path / "s.ppm") == 0
        parse_svg((tmp_path / "s.svg").read_text())
        assert read_ppm(tmp_path / "s.ppm").width == 128

    def test_sample_rejects_mismatched_models(self, models, tmp_path):
        (tmp_path / "c.json").write_text(json.dumps({"preset": "tiny", "d_z": 4}))
        assert run("train-vae", "--manifest", MANIFEST, "--config", tmp_path / "c.json", "--steps", 1,
                   "-o", tmp_path / "v4", "--quiet") == 0
        assert run("sample", "--prompt", "x", "--vae", tmp_path / "v4", "--dit", models / "dit",
                   "-o", tmp_path / "s.svg") == 2
        assert not (tmp_path / "s.svg").exists()

    def test_missing_checkpoint(self, models, tmp_path):
        assert run("sample", "--prompt", "x", "--vae", tmp_path / "none", "--dit", models / "dit",
                   "-o", tmp_path / "s.svg") == 2


def test_gradcheck_command(capsys):
    assert run("gradcheck", "--config", "tiny") == 0
    out = capsys.readouterr().out
    assert "vae max relative error" in out and "dit max relative error" in out
    assert run("gradcheck", "--config", "S") == 2
