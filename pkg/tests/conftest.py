from __future__ import annotations

import hashlib
from pathlib import Path

import pytest

FIXTURES = Path(__file__).resolve().parent / "fixtures"
CORPUS = FIXTURES / "corpus"
OVERFIT = FIXTURES / "overfit"
MANIFEST = OVERFIT / "manifest.jsonl"


def corpus_files() -> list[Path]:
    return sorted(CORPUS.glob("*.svg"))


def overfit_files() -> list[Path]:
    return sorted(OVERFIT.glob("*.svg"))


def sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


@pytest.fixture(scope="session")
def corpus_texts() -> dict[str, str]:
    return {p.name: p.read_text(encoding="utf-8") for p in corpus_files()}


@pytest.fixture(scope="session")
def overfit_samples():
    from vexel.data import load_samples

    return load_samples(MANIFEST)


@pytest.fixture(scope="session")
def trained_vae(overfit_samples):
    """Tiny VAE overfit on the 8-document set (shared by several modules)."""
    import time

    from vexel.config import vae_config
    from vexel.vae import train_vae

    start = time.perf_counter()
    result = train_vae([s.doc for s in overfit_samples], vae_config({"preset": "tiny"}), 3000, seed=0)
    result.seconds = time.perf_counter() - start
    return result


@pytest.fixture(scope="session")
def overfit_latents(trained_vae, overfit_samples):
    import numpy as np

    from vexel.vae import encode_mean, full_document_batch

    cfg = trained_vae.model.cfg
    return np.stack([encode_mean(trained_vae.model, full_document_batch(s.doc, cfg, trained_vae.tables))[0]
                     for s in overfit_samples])


@pytest.fixture(scope="session")
def trained_dit(overfit_latents, overfit_samples, trained_vae):
    import time

    import numpy as np

    from vexel.conditioning import embed_text_stub
    from vexel.config import dit_config
    from vexel.dit import train_dit

    vcfg = trained_vae.model.cfg
    cfg = dit_config({"preset": "tiny", "n": vcfg.n, "d_z": vcfg.d_z})
    texts = np.stack([embed_text_stub(s.caption, cfg.d_txt, cfg.t_txt).tokens for s in overfit_samples])
    start = time.perf_counter()
    result = train_dit(overfit_latents, texts, cfg, DIT_STEPS, seed=0)
    result.seconds = time.perf_counter() - start
    return result


DIT_STEPS = 6000


ACCEPTANCE: dict[int, str] = {}


def record_criterion(number: int, name: str, ok: bool, detail: str):
    line = f"criterion {number} {'PASS' if ok else 'FAIL'} {name}: {detail}"
    ACCEPTANCE[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.write_sep("=", "acceptance criteria")
        for number in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[number])
