"""End-to-end acceptance checks, one test per criterion.

Each test prints a PASS/FAIL line and the session summary repeats them.
"""
from __future__ import annotations

import time

import numpy as np

from vexel.codec import (
    D_M,
    EOS,
    PAD,
    SOS,
    command_rows,
    decode_matrix,
    denormalize_continuous,
    encode_matrix,
    normalize_continuous,
)
from vexel.svg.model import Color, Document, Element, ElementKind, PathCommand

from conftest import MANIFEST, corpus_files, record_criterion, sha256


def check(number: int, name: str, ok: bool, detail: str):
    record_criterion(number, name, ok, detail)
    assert ok, detail


def random_document(rng: np.random.Generator, canvas: int = 128) -> Document:
    """A random normalized document with 2-decimal coordinates."""
    def pt():
        return tuple(float(v) for v in rng.integers(0, canvas * 100, 2) / 100)

    def style():
        return Color.from_bytes(*(int(c) for c in rng.integers(0, 256, 3))), float(rng.integers(1, 10001) / 10000)

    elements = []
    for _ in range(int(rng.integers(0, 6))):
        fill, alpha = style()
        kind = rng.choice(["path", "circle", "ellipse", "rect"])
        if kind == "circle":
            elements.append(Element(ElementKind.CIRCLE, params=(*pt(), pt()[0]), fill=fill, opacity=alpha))
        elif kind == "ellipse":
            elements.append(Element(ElementKind.ELLIPSE, params=(*pt(), *pt()), fill=fill, opacity=alpha))
        elif kind == "rect":
            w, h = (max(v, 0.01) for v in pt())
            elements.append(Element(ElementKind.RECT, params=(*pt(), *pt(), w, h), fill=fill, opacity=alpha))
        else:
            cur = start = pt()
            cmds = [PathCommand("M", cur)]
            for _ in range(int(rng.integers(1, 7))):
                k = str(rng.choice(list("LCQAZM")))
                if cmds[-1].kind in "MZ" and k in "MZ":
                    k = "L"
                if k == "Z":
                    cmds.append(PathCommand("Z"))
                    cur = start
                    continue
                end = pt()
                if k == "M" and end == cur:
                    continue
                if k == "M":
                    cmds.append(PathCommand("M", end))
                    start = end
                elif k == "L":
                    cmds.append(PathCommand("L", end))
                elif k == "C":
                    cmds.append(PathCommand("C", (*pt(), *pt(), *end)))
                elif k == "Q":
                    cmds.append(PathCommand("Q", (*pt(), *end)))
                else:
                    rot = float(rng.integers(0, 36000) / 100)
                    flags = tuple(float(f) for f in rng.integers(0, 2, 2))
                    cmds.append(PathCommand("A", (*pt(), rot, *flags, *end)))
                cur = end
            if cmds[-1].kind == "M":
                cmds.pop()
            elements.append(Element(ElementKind.PATH, commands=tuple(cmds), fill=fill, opacity=alpha))
    return Document(canvas=canvas, elements=tuple(elements))


def test_criterion_1_normalization_lossless():
    from vexel.normalize import pipeline_stages
    from vexel.raster import raster_diff, rasterize
    from vexel.svg.serialize import serialize_svg

    start = time.perf_counter()
    files = corpus_files()
    lossless_bad, worst_quantize, bytes_in, bytes_out = [], 0.0, 0, 0
    for path in files:
        text = path.read_text(encoding="utf-8")
        stages = pipeline_stages(text)
        ref = rasterize(stages["input"], 128)
        for name in ("clean", "reshape", "resize"):
            if raster_diff(ref, rasterize(stages[name], 128)) != 0.0:
                lossless_bad.append(f"{path.name}:{name}")
        worst_quantize = max(worst_quantize, raster_diff(ref, rasterize(stages["quantize"], 128)))
        bytes_in += len(text.encode("utf-8"))
        bytes_out += len(serialize_svg(stages["quantize"], "relative").encode("utf-8"))
    seconds = time.perf_counter() - start
    ok = len(files) >= 50 and not lossless_bad and worst_quantize < 1e-3 and bytes_out < bytes_in and seconds < 30
    check(1, "normalization", ok,
          f"{len(files)} files, lossless stage failures {lossless_bad or 0}, worst quantize diff "
          f"{worst_quantize:.2e}, bytes {bytes_in} -> {bytes_out}, {seconds:.1f}s")


def test_criterion_2_codec_roundtrip():
    from vexel.normalize import normalize_document

    start = time.perf_counter()
    mismatched = []
    for path in corpus_files():
        doc = normalize_document(path.read_text(encoding="utf-8"))
        m = encode_matrix(doc, max(command_rows(doc) + 2, 64))
        if decode_matrix(m, canvas=doc.canvas) != doc:
            mismatched.append(path.name)

    rng = np.random.default_rng(20240601)
    m = np.zeros((4096, D_M))
    m[:, 2:10] = rng.uniform(0, 128, (4096, 8))
    m[:, 10:] = rng.uniform(0, 1, (4096, 4))
    inverse_err = float(np.max(np.abs(denormalize_continuous(normalize_continuous(m)) - m)))

    framing_bad = 0
    for _ in range(1000):
        doc = random_document(rng)
        n = command_rows(doc) + 2 + int(rng.integers(0, 4))
        mat = encode_matrix(doc, n)
        body = command_rows(doc)
        framed = (mat[0, 0] == SOS and mat[body + 1, 0] == EOS and np.all(mat[body + 2:, 0] == PAD)
                  and not np.isin(mat[1:body + 1, 0], [SOS, EOS, PAD]).any())
        if not framed or decode_matrix(mat) != doc:
            framing_bad += 1
    seconds = time.perf_counter() - start
    ok = not mismatched and inverse_err <= 1e-12 and framing_bad == 0 and seconds < 10
    check(2, "codec", ok,
          f"fixture mismatches {mismatched or 0}, inverse error {inverse_err:.1e}, "
          f"framing failures {framing_bad}/1000, {seconds:.1f}s")


def test_criterion_3_gradient_oracle():
    from vexel.checks import dit_check, gradcheck_configs, layer_checks, mutated_gelu, vae_check

    start = time.perf_counter()
    vcfg, dcfg = gradcheck_configs()
    errors = layer_checks(0)
    errors["vae_loss"] = vae_check(vcfg, 0)
    errors["dit_loss"] = dit_check(dcfg, 0)
    with mutated_gelu():
        mutated = min(layer_checks(0)["gelu"], vae_check(vcfg, 0), dit_check(dcfg, 0))
    seconds = time.perf_counter() - start
    worst = max(errors.values())
    ok = worst < 1e-4 and mutated > 1e-2 and seconds < 120
    check(3, "gradient oracle", ok,
          f"worst {max(errors, key=errors.get)} {worst:.2e}, mutated control {mutated:.2e}, {seconds:.1f}s")


def test_criterion_4_schedule_and_guidance():
    from vexel.dit import NoiseSchedule, cfg_noise, condition_dropout_mask
    from vexel.nn.optim import lr_schedule
    from vexel.nn.rng import make_rng

    s = NoiseSchedule.linear()
    vp_err = float(np.max(np.abs(s.alpha[1:] ** 2 + s.sigma[1:] ** 2 - 1.0)))
    total = 100000
    lr_ok = lr_schedule(2000, total) == 3e-4 and lr_schedule(total, total) == 1.5e-5
    rng = np.random.default_rng(1)
    c, u = rng.standard_normal((2, 32, 8))
    cfg_ok = np.array_equal(cfg_noise(c, u, 0.0), u) and np.array_equal(cfg_noise(c, u, 1.0), c)
    rate = float(condition_dropout_mask(make_rng(0, "dropout-audit"), 10000, 0.1).mean())
    ok = vp_err <= 1e-12 and lr_ok and cfg_ok and 0.09 <= rate <= 0.11
    check(4, "schedule and guidance", ok,
          f"max |a^2+s^2-1| {vp_err:.1e} over {s.steps} steps, lr endpoints exact {lr_ok}, "
          f"guidance identities {cfg_ok}, dropout rate {rate:.4f}")


def test_criterion_5_vae_overfit(trained_vae, overfit_samples):
    from vexel.vae import evaluate

    report = evaluate(trained_vae.model, trained_vae.tables, [s.doc for s in overfit_samples])
    steps = len(trained_vae.trace)
    ok = report.mse < 1e-3 and report.token_accuracy == 1.0 and steps <= 3000 and trained_vae.seconds < 900
    check(5, "VAE overfit", ok,
          f"masked MSE {report.mse:.2e} after {steps} steps, token accuracy {report.token_accuracy:.4f}, "
          f"exact documents {report.exact_documents}/{report.count}, {trained_vae.seconds:.0f}s")


def test_criterion_6_conditional_generation(trained_vae, trained_dit, overfit_samples):
    from vexel.dit import text_to_svg
    from vexel.raster import raster_diff, rasterize

    start = time.perf_counter()
    vae = (trained_vae.model, trained_vae.tables)
    n = trained_vae.model.cfg.n

    def tokens(doc):
        m = encode_matrix(doc, n)
        end = int(np.argmax(m[:, 0] == EOS)) + 1
        return tuple(map(tuple, m[:end, :2].astype(int)))

    classes: dict[str, set] = {}
    for s in overfit_samples:
        classes.setdefault(s.caption, set()).add(tokens(s.doc))
    hits = {}
    for prompt, sequences in classes.items():
        hits[prompt] = sum(tokens(text_to_svg(prompt, vae, trained_dit.model, seed=seed)) in sequences
                           for seed in range(8))
    diffs = []
    for prompt in classes:
        fast = text_to_svg(prompt, vae, trained_dit.model, seed=0, steps=100)
        slow = text_to_svg(prompt, vae, trained_dit.model, seed=0, steps=1000)
        diffs.append(raster_diff(rasterize(fast), rasterize(slow)))
    seconds = trained_vae.seconds + trained_dit.seconds + time.perf_counter() - start
    ok = all(h >= 7 for h in hits.values()) and max(diffs) < 0.05 and seconds < 1800
    check(6, "conditional generation", ok,
          f"class hits {hits} of 8 seeds, DDIM 100 vs 1000 diff {max(diffs):.4f}, {seconds:.0f}s total")


def test_criterion_7_determinism(tmp_path):
    from vexel.cli import dispatch

    svg = corpus_files()[3]

    def outputs(root):
        root.mkdir()
        commands = [
            ["clean", svg, "-o", root / "clean.svg", "--stats", root / "clean_stats.json"],
            ["stats", svg, "-o", root / "stats.json"],
            ["raster", svg, "-o", root / "r.ppm"],
            ["encode", svg, "-o", root / "m.mat"],
            ["decode", root / "m.mat", "-o", root / "d.svg"],
            ["features", svg, "--stub", "-o", root / "f.vxf"],
            ["train-vae", "--manifest", MANIFEST, "--config", "tiny", "--steps", 3, "-o", root / "vae", "--quiet"],
            ["train-dit", "--manifest", MANIFEST, "--vae", root / "vae", "--steps", 3, "-o", root / "dit", "--quiet"],
            ["sample", "--prompt", "circle-class", "--vae", root / "vae", "--dit", root / "dit", "--steps", 10,
             "-o", root / "s.svg", "--png", root / "s.ppm"],
        ]
        codes = [dispatch([str(a) for a in cmd]) for cmd in commands]
        assert codes == [0] * len(commands), codes
        return {str(p.relative_to(root)): sha256(p) for p in sorted(root.rglob("*")) if p.is_file()}

    first, second = outputs(tmp_path / "a"), outputs(tmp_path / "b")
    differing = sorted(k for k in first if first[k] != second.get(k))
    ok = first.keys() == second.keys() and not differing
    check(7, "determinism", ok, f"{len(first)} output files hashed, differing {differing or 0}")


def test_criterion_8_size_table():
    from vexel.config import dit_config
    from vexel.dit import VSDiT

    def closed_form(blocks, d, d_z, d_txt):
        block = 22 * d * d + 18 * d
        return (d_z * d + d) + 2 * (d * d + d) + d_txt * d + blocks * block + 2 * d + d * d_z + d_z + 2

    details, ok = [], True
    for preset, (blocks, d, heads) in {"S": (12, 384, 6), "B": (12, 768, 12), "L": (24, 1024, 16)}.items():
        cfg = dit_config({"preset": preset})
        model = VSDiT.shape_only(cfg)
        count = model.num_parameters()
        shapes_ok = (len(model.blocks) == blocks
                     and all(b.attn.heads == heads and b.attn.q.weight.shape == (d, d) for b in model.blocks))
        ok &= shapes_ok and count == closed_form(blocks, d, cfg.d_z, cfg.d_txt)
        details.append(f"{preset}=({blocks},{d},{heads}) {count / 1e6:.1f}M")
    check(8, "size table", ok, ", ".join(details))
