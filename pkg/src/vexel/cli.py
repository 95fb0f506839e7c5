"""Command-line entry point: ``vexel <subcommand> ...``.

Exit status: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

import numpy as np

from vexel.errors import ConfigError, DataError, NonFiniteLoss, VexelError

GRADCHECK_TOL = 1e-4


class UsageError(Exception):
    exit_code = 1


class _Parser(argparse.ArgumentParser):
    """argparse that raises instead of exiting with status 2."""

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage().rstrip()}")


def _read_svg(path: Path):
    from vexel.svg.parse import parse_svg

    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    return parse_svg(text)


def _write_json(path: Path, data):
    from vexel.io import atomic_write

    atomic_write(path, json.dumps(data, indent=2, sort_keys=True) + "\n")


def _stats_png(path: Path) -> Path:
    return path.with_suffix(".png")


def _sum_counts(reports, side: str) -> dict[str, int]:
    total: dict[str, int] = {}
    for r in reports:
        for k, v in getattr(r, side).items():
            total[k] = total.get(k, 0) + v
    return total


def _svg_inputs(path: Path) -> list[Path]:
    if path.is_dir():
        files = sorted(p for p in path.iterdir() if p.suffix.lower() == ".svg")
        if not files:
            raise DataError(f"no .svg files in {path}")
        return files
    if not path.exists():
        raise DataError(f"{path} does not exist")
    return [path]


def _normalize_files(src: Path, canvas: int, precision: int, out: Path | None):
    """Normalize one file or a directory; returns per-file stats reports."""
    from vexel.io import atomic_write
    from vexel.normalize import element_stats, normalize_document
    from vexel.svg.serialize import serialize_svg

    reports = []
    for f in _svg_inputs(src):
        before = _read_svg(f)
        after = normalize_document(before, canvas, precision)
        if out is not None:
            target = out / f.name if src.is_dir() else out
            atomic_write(target, serialize_svg(after, "relative"))
        reports.append(element_stats(before, after, f.name))
    return reports


def _write_stats(reports, path: Path, batch: bool):
    from vexel.plotting import element_count_figure

    data = [r.to_json() for r in reports] if batch else reports[0].to_json()
    _write_json(path, data)
    element_count_figure(_sum_counts(reports, "before_counts"), _sum_counts(reports, "after_counts"),
                         _stats_png(path))


def cmd_clean(args) -> int:
    src, out = Path(args.input), Path(args.output)
    if src.is_dir():
        out.mkdir(parents=True, exist_ok=True)
    reports = _normalize_files(src, args.canvas, args.precision, out)
    if args.stats:
        _write_stats(reports, Path(args.stats), src.is_dir())
    return 0


def cmd_stats(args) -> int:
    src = Path(args.input)
    reports = _normalize_files(src, args.canvas, args.precision, None)
    _write_stats(reports, Path(args.output), src.is_dir())
    return 0


def cmd_raster(args) -> int:
    from vexel.io import atomic_write
    from vexel.raster import ppm_bytes, rasterize

    atomic_write(args.output, ppm_bytes(rasterize(_read_svg(Path(args.input)), args.size)))
    return 0


def cmd_encode(args) -> int:
    from vexel.codec import encode_matrix, write_mat
    from vexel.normalize import normalize_document

    doc = normalize_document(_read_svg(Path(args.input)), args.canvas, args.precision)
    write_mat(args.output, encode_matrix(doc, args.n))
    return 0


def cmd_decode(args) -> int:
    from vexel.codec import decode_matrix, read_mat
    from vexel.io import atomic_write
    from vexel.svg.serialize import serialize_svg

    try:
        m = read_mat(args.input)
    except OSError as exc:
        raise DataError(f"cannot read {args.input}: {exc}") from exc
    doc = decode_matrix(m, canvas=args.canvas, strict=not args.lenient)
    atomic_write(args.output, serialize_svg(doc))
    return 0


def cmd_features(args) -> int:
    from vexel.conditioning import document_features, load_features, save_features
    from vexel.normalize import normalize_document

    if args.import_path:
        src = Path(args.import_path)
        try:
            if src.suffix == ".npy":
                tokens = np.load(src, allow_pickle=False)
            else:
                tokens = load_features(src)
        except (OSError, ValueError) as exc:
            raise DataError(f"cannot import features from {src}: {exc}") from exc
        if tokens.ndim != 2 or tokens.shape != (args.n, args.dim):
            raise DataError(f"imported features are {tokens.shape}, expected ({args.n}, {args.dim})")
        if not np.all(np.isfinite(tokens)):
            raise DataError("imported features contain non-finite values")
    else:
        doc = normalize_document(_read_svg(Path(args.input)), args.canvas)
        tokens = document_features(doc, args.dim, args.n, args.canvas)
    save_features(args.output, np.asarray(tokens, dtype=np.float64))
    return 0


def _loss_report(out: Path, header: list[str], rows, title: str):
    from vexel.io import atomic_write
    from vexel.plotting import loss_figure

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([row[0]] + [repr(float(v)) for v in row[1:]])
    atomic_write(out / "loss.csv", buf.getvalue())
    steps = [r[0] for r in rows]
    series = {name: [r[i] for r in rows] for i, name in enumerate(header) if name not in ("step", "lr")}
    loss_figure(steps, series, out / "loss.png", title)


def _log(quiet: bool):
    return (lambda msg: None) if quiet else (lambda msg: print(msg, file=sys.stderr))


def cmd_train_vae(args) -> int:
    from vexel.config import load_config
    from vexel.data import load_samples
    from vexel.vae import evaluate, save_vae, train_vae

    cfg = load_config(args.config, "vae")
    samples = load_samples(args.manifest, cfg.canvas)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    docs = [s.doc for s in samples]
    result = train_vae(docs, cfg, args.steps, args.seed, log_every=args.log_every, log=_log(args.quiet))
    save_vae(out / "vae.vxc", result.model, result.tables)
    _loss_report(out, ["step", "lr", "mse", "kl", "total"], result.trace, "VP-VAE")
    report = evaluate(result.model, result.tables, docs)
    if not args.quiet:
        print(f"mse {report.mse:.3e} token_accuracy {report.token_accuracy:.4f} "
              f"exact {report.exact_documents}/{report.count}")
    return 0


def _resolve_checkpoint(path: str, name: str) -> Path:
    p = Path(path)
    if p.is_dir():
        p = p / name
    elif not p.exists() and Path(str(p) + ".vxc").exists():
        p = Path(str(p) + ".vxc")
    if not p.exists():
        raise DataError(f"checkpoint {path} not found")
    return p


def cmd_train_dit(args) -> int:
    from vexel.conditioning import embed_text_stub
    from vexel.config import dit_config, load_config, to_dict
    from vexel.data import load_samples
    from vexel.dit import save_dit, train_dit
    from vexel.vae import encode_mean, full_document_batch, load_vae

    vae, tables = load_vae(_resolve_checkpoint(args.vae, "vae.vxc"))
    base = load_config(args.config, "dit")
    # latent geometry always follows the VAE the model is trained against
    cfg = dit_config({**to_dict(base), "n": vae.cfg.n, "d_z": vae.cfg.d_z})
    samples = load_samples(args.manifest, vae.cfg.canvas)
    latents = np.stack([encode_mean(vae, full_document_batch(s.doc, vae.cfg, tables))[0] for s in samples])
    texts = np.stack([embed_text_stub(s.caption, cfg.d_txt, cfg.t_txt).tokens for s in samples])
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    result = train_dit(latents, texts, cfg, args.steps, args.seed, log_every=args.log_every, log=_log(args.quiet))
    save_dit(out / "dit.vxc", result.model)
    _loss_report(out, ["step", "lr", "loss"], result.trace, "VS-DiT")
    return 0


def cmd_sample(args) -> int:
    from vexel.dit import load_dit, text_to_svg
    from vexel.io import atomic_write
    from vexel.raster import ppm_bytes, rasterize
    from vexel.svg.serialize import serialize_svg
    from vexel.vae import load_vae

    vae = load_vae(_resolve_checkpoint(args.vae, "vae.vxc"))
    dit = load_dit(_resolve_checkpoint(args.dit, "dit.vxc"))
    doc = text_to_svg(args.prompt, vae, dit, w=args.cfg, seed=args.seed, steps=args.steps)
    atomic_write(args.output, serialize_svg(doc))
    if args.png:
        atomic_write(args.png, ppm_bytes(rasterize(doc, vae[0].cfg.canvas)))
    return 0


def cmd_gradcheck(args) -> int:
    from vexel.checks import dit_check, gradcheck_configs, vae_check

    if args.config != "tiny":
        raise ConfigError("gradcheck runs on the tiny config only")
    vae_cfg, dit_cfg = gradcheck_configs()
    errors = {"vae": vae_check(vae_cfg, args.seed), "dit": dit_check(dit_cfg, args.seed)}
    for name, err in errors.items():
        print(f"{name} max relative error {err:.3e}")
    if not all(e < GRADCHECK_TOL for e in errors.values()):
        print(f"error: gradient check above {GRADCHECK_TOL:g}", file=sys.stderr)
        return 3
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="vexel", description="SVG normalization, matrix codec and latent diffusion toolkit.")
    p.add_argument("--json-errors", action="store_true", help="report errors as JSON on stderr")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)

    def add(name, fn, help_text):
        sp = sub.add_parser(name, help=help_text, description=help_text)
        sp.set_defaults(fn=fn)
        return sp

    def norm_flags(sp):
        sp.add_argument("--canvas", type=int, default=128, help="target square canvas size")
        sp.add_argument("--precision", type=int, default=2, help="decimal places kept")

    sp = add("clean", cmd_clean, "normalize an SVG file or a directory of SVGs")
    sp.add_argument("input")
    sp.add_argument("-o", "--output", required=True)
    norm_flags(sp)
    sp.add_argument("--stats", help="write element/byte statistics JSON (and a PNG chart)")

    sp = add("stats", cmd_stats, "element and byte statistics before and after normalization")
    sp.add_argument("input")
    sp.add_argument("-o", "--output", required=True, help="stats JSON path; the chart goes next to it")
    norm_flags(sp)

    sp = add("raster", cmd_raster, "render an SVG to binary PPM")
    sp.add_argument("input")
    sp.add_argument("-o", "--output", required=True)
    sp.add_argument("--size", type=int, default=128)

    sp = add("encode", cmd_encode, "normalize and encode an SVG as a .mat matrix")
    sp.add_argument("input")
    sp.add_argument("-o", "--output", required=True)
    sp.add_argument("--n", type=int, default=1024, help="matrix rows")
    norm_flags(sp)

    sp = add("decode", cmd_decode, "decode a .mat matrix to SVG")
    sp.add_argument("input")
    sp.add_argument("-o", "--output", required=True)
    sp.add_argument("--canvas", type=int, default=128)
    sp.add_argument("--lenient", action="store_true", help="repair instead of rejecting bad rows")

    sp = add("features", cmd_features, "write pixel features (.vxf) for an SVG")
    sp.add_argument("input", nargs="?")
    sp.add_argument("-o", "--output", required=True)
    mode = sp.add_mutually_exclusive_group()
    mode.add_argument("--stub", action="store_true", help="deterministic patch-statistics extractor (default)")
    mode.add_argument("--import", dest="import_path", metavar="FILE", help="import precomputed features")
    sp.add_argument("--dim", type=int, default=64)
    sp.add_argument("--n", type=int, default=1024)
    sp.add_argument("--canvas", type=int, default=128)

    sp = add("train-vae", cmd_train_vae, "train the vector-pixel fusion VAE")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--config", default=None, help="JSON config path or preset name")
    sp.add_argument("--steps", type=int, required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("-o", "--output", required=True, help="output directory")
    sp.add_argument("--log-every", type=int, default=0)
    sp.add_argument("--quiet", action="store_true")

    sp = add("train-dit", cmd_train_dit, "train the latent diffusion transformer")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--vae", required=True)
    sp.add_argument("--config", default="tiny", help="preset (tiny, S, B, L) or JSON path")
    sp.add_argument("--steps", type=int, required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("-o", "--output", required=True, help="output directory")
    sp.add_argument("--log-every", type=int, default=0)
    sp.add_argument("--quiet", action="store_true")

    sp = add("sample", cmd_sample, "generate an SVG from a text prompt")
    sp.add_argument("--prompt", required=True)
    sp.add_argument("--vae", required=True)
    sp.add_argument("--dit", required=True)
    sp.add_argument("--cfg", type=float, default=4.0, help="guidance weight")
    sp.add_argument("--steps", type=int, default=100)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("-o", "--output", required=True)
    sp.add_argument("--png", help="also write a PPM preview")

    sp = add("gradcheck", cmd_gradcheck, "finite-difference check of both model losses")
    sp.add_argument("--config", default="tiny")
    sp.add_argument("--seed", type=int, default=0)
    return p


def _validate(args):
    if args.command == "features" and not args.import_path and not args.input:
        raise UsageError("vexel features: an input SVG is required unless --import is given")
    for name in ("steps", "n", "size", "canvas", "dim"):
        value = getattr(args, name, None)
        if value is not None and value < 1:
            raise UsageError(f"vexel {args.command}: --{name} must be positive")
    if getattr(args, "precision", 0) < 0:
        raise UsageError(f"vexel {args.command}: --precision must be non-negative")


def _report(exc: Exception, code: int, json_errors: bool):
    if json_errors:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc).splitlines()[0] if str(exc) else "",
                          "exit_code": code}), file=sys.stderr)
    else:
        text = str(exc)
        print(f"error: {text}" if code != 1 else text, file=sys.stderr)


def dispatch(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    json_errors = "--json-errors" in argv
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(parser.format_usage().rstrip())
        _validate(args)
        return args.fn(args)
    except UsageError as exc:
        _report(exc, 1, json_errors)
        return 1
    except NonFiniteLoss as exc:
        _report(exc, 3, json_errors)
        return 3
    except (VexelError, ValueError) as exc:
        _report(exc, 2, json_errors)
        return 2


def main(argv: list[str] | None = None):
    sys.exit(dispatch(argv))


if __name__ == "__main__":
    main()
