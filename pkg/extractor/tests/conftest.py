"""Builders for a tiny on-disk image corpus plus its label metadata."""

import json
from contextlib import contextmanager

import numpy as np
from PIL import Image


_criterion_lines: list[str] = []


@contextmanager
def criterion(name: str):
    """Record and print one ``[name] PASS`` / ``[name] FAIL`` line."""
    try:
        yield
    except BaseException:
        _criterion_lines.append(f"[{name}] FAIL")
        print(_criterion_lines[-1])
        raise
    _criterion_lines.append(f"[{name}] PASS")
    print(_criterion_lines[-1])


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    # repeat the criterion lines outside capture so every run shows them
    if _criterion_lines:
        terminalreporter.section("acceptance criteria")
        for line in _criterion_lines:
            terminalreporter.line(line)


def write_image(path, rng: np.random.Generator, base_color) -> str:
    """A 24x24 RGB image: per-class base color plus per-image noise."""
    base = np.asarray(base_color, dtype=np.float32)
    noise = rng.normal(0.0, 18.0, (24, 24, 3))
    arr = np.clip(base[None, None, :] + noise, 0, 255).astype(np.uint8)
    Image.fromarray(arr).save(path)
    return str(path)


def build_corpus(root, rng: np.random.Generator, counts=(4, 3, 3)):
    """Image files for len(counts) classes; returns (paths, labels)."""
    palette = ((220, 40, 40), (40, 220, 40), (40, 40, 220), (220, 220, 40))
    root.mkdir(parents=True, exist_ok=True)
    paths, labels = [], []
    for c, count in enumerate(counts):
        for i in range(count):
            path = root / f"class{c}_{i:02d}.png"
            paths.append(write_image(path, rng, palette[c % len(palette)]))
            labels.append(c)
    return tuple(paths), np.asarray(labels, dtype=np.int64)


TOY_NAME_SETS = {
    "wordnet": ("tenrec, Tenrec ecaudatus", "quokka", "markhor, Capra falconeri"),
    "openai": ("tenrec", "quokka", "markhor"),
    "openai_plus": ("common tenrec", "quokka wallaby", "markhor goat"),
}


def write_catalog(path, name_sets=None, num_classes=3) -> str:
    doc = {"num_classes": num_classes,
           "name_sets": {k: list(v) for k, v in (name_sets or TOY_NAME_SETS).items()}}
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return str(path)


def write_corrections(path, corrections: dict) -> str:
    doc = {"corrections": {str(k): [int(c) for c in v] for k, v in corrections.items()}}
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return str(path)
