"""Seeded synthetic degradations and paired toy datasets.

Seven degradation operators (noise, blur, rain, haze, snow, lowlight,
raindrop) map [0,1] images to [0,1] images and reduce to the identity at
neutral parameters. Recipes compose operators in order; the six triple
mixes used for the mixed-degradation benchmark are fixed here. Datasets
are emitted as binary PPM pairs with multi-hot label sidecars.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
from scipy import ndimage

from .ppm import read_ppm, write_ppm

KINDS = ("noise", "blur", "rain", "haze", "snow", "lowlight", "raindrop")

# six triple-degradation recipes of the mixed benchmark
MID6_RECIPES = (
    ("haze", "noise", "blur"),
    ("lowlight", "noise", "blur"),
    ("rain", "noise", "blur"),
    ("rain", "raindrop", "noise"),
    ("raindrop", "noise", "blur"),
    ("snow", "noise", "blur"),
)

DEFAULT_PARAMS: dict[str, dict[str, float]] = {
    "noise": {"sigma": 0.08},
    "blur": {"sigma": 1.8},
    "rain": {"count": 60, "length": 11, "intensity": 0.5},
    "haze": {"transmission": 0.65, "airlight": 0.9},
    "snow": {"count": 90, "radius": 1.6, "brightness": 0.95},
    "lowlight": {"gamma": 1.6, "scale": 0.9},
    "raindrop": {"count": 9, "radius": 5.0, "blur_sigma": 2.2, "brighten": 0.10},
}

NEUTRAL_PARAMS: dict[str, dict[str, float]] = {
    "noise": {"sigma": 0.0},
    "blur": {"sigma": 0.0},
    "rain": {"count": 0, "length": 11, "intensity": 0.5},
    "haze": {"transmission": 1.0, "airlight": 0.9},
    "snow": {"count": 0, "radius": 1.6, "brightness": 0.95},
    "lowlight": {"gamma": 1.0, "scale": 1.0},
    "raindrop": {"count": 0, "radius": 5.0, "blur_sigma": 2.2, "brighten": 0.10},
}


@dataclass(frozen=True)
class DegradationOp:
    kind: str
    params: dict[str, float] = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown degradation kind '{self.kind}'")
        merged = dict(DEFAULT_PARAMS[self.kind])
        merged.update(self.params)
        object.__setattr__(self, "params", merged)


@dataclass(frozen=True)
class MixRecipe:
    ops: tuple[DegradationOp, ...]

    def __post_init__(self):
        if not self.ops:
            raise ValueError("a recipe needs at least one operator")

    @property
    def kinds(self) -> tuple[str, ...]:
        return tuple(op.kind for op in self.ops)


@dataclass
class PairedSample:
    hq: np.ndarray            # [3,H,W] float32 in [0,1]
    lq: np.ndarray            # same shape
    labels: np.ndarray        # multi-hot over the manifest kind order
    recipe: tuple[str, ...] = ()


def _op_rng(op: DegradationOp) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((op.seed, KINDS.index(op.kind))))


def _check_range(name: str, value: float, lo: float, hi: float) -> None:
    if not lo <= value <= hi:
        raise ValueError(f"{name}={value} outside [{lo}, {hi}]")


def _disk_mask(shape: tuple[int, int], cy: float, cx: float, radius: float) -> np.ndarray:
    yy, xx = np.ogrid[: shape[0], : shape[1]]
    d2 = (yy - cy) ** 2 + (xx - cx) ** 2
    # soft edge one pixel wide
    return np.clip(radius + 0.5 - np.sqrt(d2), 0.0, 1.0)


def apply(op: DegradationOp, img: np.ndarray) -> np.ndarray:
    """Apply one degradation operator to a [3,H,W] image in [0,1]."""
    img = np.asarray(img, dtype=np.float32)
    if img.ndim != 3 or img.shape[0] != 3:
        raise ValueError(f"expected [3,H,W] image, got {img.shape}")
    if img.min() < 0.0 or img.max() > 1.0:
        raise ValueError("image values outside [0,1]")
    p = op.params
    h, w = img.shape[1:]
    rng = _op_rng(op)

    if op.kind == "noise":
        _check_range("sigma", p["sigma"], 0.0, 1.0)
        if p["sigma"] == 0.0:
            return img.copy()
        return np.clip(img + rng.normal(0.0, p["sigma"], size=img.shape), 0.0, 1.0).astype(np.float32)

    if op.kind == "blur":
        _check_range("sigma", p["sigma"], 0.0, 16.0)
        if p["sigma"] == 0.0:
            return img.copy()
        out = ndimage.gaussian_filter(img, sigma=(0.0, p["sigma"], p["sigma"]), mode="reflect")
        return np.clip(out, 0.0, 1.0).astype(np.float32)

    if op.kind == "rain":
        count = int(p["count"])
        _check_range("count", count, 0, 10000)
        _check_range("intensity", p["intensity"], 0.0, 1.0)
        if count == 0 or p["intensity"] == 0.0:
            return img.copy()
        mask = np.zeros((h, w), dtype=np.float32)
        length = max(int(p["length"]), 1)
        for _ in range(count):
            y0 = rng.uniform(0, h)
            x0 = rng.uniform(0, w)
            ang = np.deg2rad(rng.uniform(75.0, 105.0))
            dy, dx = np.sin(ang), np.cos(ang)
            for s in range(length):
                yi, xi = int(y0 + dy * s), int(x0 + dx * s)
                if 0 <= yi < h and 0 <= xi < w:
                    mask[yi, xi] = 1.0
        mask = ndimage.gaussian_filter(mask, 0.5)
        return np.clip(img + p["intensity"] * mask[None], 0.0, 1.0).astype(np.float32)

    if op.kind == "haze":
        t = p["transmission"]
        a = p["airlight"]
        _check_range("transmission", t, 0.0, 1.0)
        _check_range("airlight", a, 0.0, 1.0)
        return np.clip(img * t + a * (1.0 - t), 0.0, 1.0).astype(np.float32)

    if op.kind == "snow":
        count = int(p["count"])
        _check_range("count", count, 0, 10000)
        _check_range("brightness", p["brightness"], 0.0, 1.0)
        if count == 0:
            return img.copy()
        mask = np.zeros((h, w), dtype=np.float32)
        for _ in range(count):
            cy, cx = rng.uniform(0, h), rng.uniform(0, w)
            r = rng.uniform(0.6, p["radius"])
            mask = np.maximum(mask, _disk_mask((h, w), cy, cx, r))
        out = img * (1.0 - mask[None]) + p["brightness"] * mask[None]
        return np.clip(out, 0.0, 1.0).astype(np.float32)

    if op.kind == "lowlight":
        g, s = p["gamma"], p["scale"]
        _check_range("gamma", g, 0.05, 10.0)
        _check_range("scale", s, 0.0, 1.0)
        return np.clip(img ** g * s, 0.0, 1.0).astype(np.float32)

    if op.kind == "raindrop":
        count = int(p["count"])
        _check_range("count", count, 0, 1000)
        if count == 0:
            return img.copy()
        blurred = ndimage.gaussian_filter(img, sigma=(0.0, p["blur_sigma"], p["blur_sigma"]), mode="reflect")
        blurred = np.clip(blurred + p["brighten"], 0.0, 1.0)
        mask = np.zeros((h, w), dtype=np.float32)
        for _ in range(count):
            cy, cx = rng.uniform(0, h), rng.uniform(0, w)
            r = rng.uniform(0.6 * p["radius"], p["radius"])
            mask = np.maximum(mask, _disk_mask((h, w), cy, cx, r))
        out = img * (1.0 - mask[None]) + blurred * mask[None]
        return np.clip(out, 0.0, 1.0).astype(np.float32)

    raise ValueError(f"unknown degradation kind '{op.kind}'")


def apply_recipe(recipe: MixRecipe, img: np.ndarray) -> np.ndarray:
    out = img
    for op in recipe.ops:
        out = apply(op, out)
    return out


def recipe_labels(recipe_kinds: Sequence[str], kinds: Sequence[str] = KINDS) -> np.ndarray:
    labels = np.zeros(len(kinds), dtype=np.float32)
    for k in recipe_kinds:
        if k not in kinds:
            raise ValueError(f"kind '{k}' not in manifest order {tuple(kinds)}")
        labels[list(kinds).index(k)] = 1.0
    return labels


# ---- procedural base images ----

_GLYPH_ROWS = 3
_GLYPH_SHAPE = (5, 3)


def _gradient_image(rng: np.random.Generator, size: int) -> np.ndarray:
    theta = rng.uniform(0, 2 * np.pi)
    yy, xx = np.mgrid[0:size, 0:size] / (size - 1)
    ramp = (np.cos(theta) * xx + np.sin(theta) * yy)
    ramp = (ramp - ramp.min()) / (ramp.max() - ramp.min() + 1e-9)
    lo = rng.uniform(0.0, 0.4, size=3)
    hi = rng.uniform(0.6, 1.0, size=3)
    return (lo[:, None, None] + (hi - lo)[:, None, None] * ramp[None]).astype(np.float32)


def _checker_image(rng: np.random.Generator, size: int) -> np.ndarray:
    cell = int(rng.choice([4, 8, 16]))
    oy, ox = rng.integers(0, cell, size=2)
    yy, xx = np.mgrid[0:size, 0:size]
    board = (((yy + oy) // cell + (xx + ox) // cell) % 2).astype(np.float32)
    c0 = rng.uniform(0.0, 0.45, size=3)
    c1 = rng.uniform(0.55, 1.0, size=3)
    return (c0[:, None, None] * (1 - board) + c1[:, None, None] * board).astype(np.float32)


def _smooth_field_image(rng: np.random.Generator, size: int) -> np.ndarray:
    coarse = rng.uniform(0.0, 1.0, size=(3, 6, 6))
    out = ndimage.zoom(coarse, (1, size / 6, size / 6), order=3, mode="nearest")
    return np.clip(out[:, :size, :size], 0.0, 1.0).astype(np.float32)


def _glyph_image(rng: np.random.Generator, size: int) -> np.ndarray:
    """Rows of small text-like strokes on a contrasting background."""
    bg = rng.uniform(0.55, 0.95)
    fg = rng.uniform(0.0, 0.25)
    img = np.full((size, size), bg, dtype=np.float32)
    gh, gw = _GLYPH_SHAPE
    scale = 2
    row_pitch = gh * scale + 4
    col_pitch = gw * scale + 2
    for row in range(2, size - gh * scale, row_pitch):
        for col in range(2, size - gw * scale, col_pitch):
            if rng.uniform() < 0.15:
                continue  # word gaps
            glyph = (rng.uniform(size=_GLYPH_SHAPE) < 0.55).astype(np.float32)
            block = np.kron(glyph, np.ones((scale, scale), dtype=np.float32))
            sl = img[row:row + gh * scale, col:col + gw * scale]
            sl[:] = sl * (1 - block) + fg * block
    tint = rng.uniform(0.9, 1.0, size=3).astype(np.float32)
    return np.clip(img[None] * tint[:, None, None], 0.0, 1.0)


_BASE_BUILDERS = (_gradient_image, _checker_image, _smooth_field_image, _glyph_image)
BASE_STYLES = ("gradient", "checker", "smooth", "glyph")


def base_image(seed: int, index: int, size: int = 64, style: str | None = None) -> np.ndarray:
    """Deterministic procedural clean image number `index` under `seed`."""
    rng = np.random.default_rng(np.random.SeedSequence((seed, index)))
    if style is None:
        builder = _BASE_BUILDERS[index % len(_BASE_BUILDERS)]
    else:
        builder = _BASE_BUILDERS[BASE_STYLES.index(style)]
    return builder(rng, size)


# ---- dataset construction and I/O ----

def make_sample(hq: np.ndarray, recipe_kinds: Sequence[str], sample_seed: int,
                kinds: Sequence[str] = KINDS) -> PairedSample:
    ops = tuple(DegradationOp(k, seed=sample_seed + 7919 * i) for i, k in enumerate(recipe_kinds))
    recipe = MixRecipe(ops)
    lq = apply_recipe(recipe, hq)
    return PairedSample(hq=hq, lq=lq, labels=recipe_labels(recipe_kinds, kinds),
                        recipe=tuple(recipe_kinds))


def build_mid6(seed: int, base_images: Sequence[np.ndarray], count_per_recipe: int,
               kinds: Sequence[str] = KINDS,
               recipes: Sequence[Sequence[str]] = MID6_RECIPES) -> list[PairedSample]:
    """Paired dataset over the six triple-mix recipes, multi-hot labelled."""
    samples: list[PairedSample] = []
    idx = 0
    for recipe_kinds in recipes:
        for _ in range(count_per_recipe):
            hq = base_images[idx % len(base_images)]
            samples.append(make_sample(hq, recipe_kinds, sample_seed=seed * 100003 + idx, kinds=kinds))
            idx += 1
    return samples


def build_singles(seed: int, base_images: Sequence[np.ndarray], count_per_kind: int,
                  kinds: Sequence[str] = KINDS) -> list[PairedSample]:
    samples: list[PairedSample] = []
    idx = 0
    for kind in kinds:
        for _ in range(count_per_kind):
            hq = base_images[idx % len(base_images)]
            samples.append(make_sample(hq, (kind,), sample_seed=seed * 99991 + 31 * idx, kinds=kinds))
            idx += 1
    return samples


def save_dataset(split_dir: str | Path, samples: Sequence[PairedSample],
                 kinds: Sequence[str] = KINDS) -> None:
    split_dir = Path(split_dir)
    split_dir.mkdir(parents=True, exist_ok=True)
    root = split_dir.parent
    manifest = root / "manifest.txt"
    line = "kinds: " + " ".join(kinds) + "\n"
    if manifest.exists() and manifest.read_text() != line:
        raise ValueError(f"{manifest}: existing manifest disagrees with kind order")
    manifest.write_text(line)
    for i, s in enumerate(samples):
        stem = f"{i:05d}"
        write_ppm(split_dir / f"{stem}_hq.ppm", s.hq)
        write_ppm(split_dir / f"{stem}_lq.ppm", s.lq)
        labels = " ".join(str(int(v)) for v in s.labels)
        (split_dir / f"{stem}_labels.txt").write_text(labels + "\n")


def read_manifest(root: str | Path) -> tuple[str, ...]:
    path = Path(root) / "manifest.txt"
    text = path.read_text().strip()
    if not text.startswith("kinds:"):
        raise ValueError(f"{path}: malformed manifest (expected 'kinds: ...')")
    return tuple(text.split(":", 1)[1].split())


def load_dataset(split_dir: str | Path) -> Iterator[PairedSample]:
    """Stream samples back in lexicographic filename order."""
    split_dir = Path(split_dir)
    if not split_dir.is_dir():
        raise FileNotFoundError(f"dataset split directory not found: {split_dir}")
    kinds = read_manifest(split_dir.parent)
    for hq_path in sorted(split_dir.glob("*_hq.ppm")):
        stem = hq_path.name[: -len("_hq.ppm")]
        lq_path = split_dir / f"{stem}_lq.ppm"
        labels_path = split_dir / f"{stem}_labels.txt"
        hq = read_ppm(hq_path)
        if not lq_path.exists():
            raise FileNotFoundError(f"missing pair file {lq_path}")
        lq = read_ppm(lq_path)
        try:
            labels = np.array([float(v) for v in labels_path.read_text().split()], dtype=np.float32)
        except (OSError, ValueError) as e:
            raise ValueError(f"{labels_path}: malformed labels: {e}") from e
        if labels.shape != (len(kinds),):
            raise ValueError(f"{labels_path}: expected {len(kinds)} labels, got {labels.shape[0]}")
        active = tuple(k for k, v in zip(kinds, labels) if v > 0)
        yield PairedSample(hq=hq, lq=lq, labels=labels, recipe=active)
