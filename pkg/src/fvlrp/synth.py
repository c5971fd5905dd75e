"""Synthetic labeled corpora with controllable context correlation.

Images are composed of a full-frame procedural background texture plus
one textured object shape (disk or cross) with a tight bounding box.
Textures are oriented sinusoid gratings or band-limited noise. The
context correlation rho controls how predictive the background is: with
probability rho an image gets its class's own background texture,
otherwise one drawn uniformly from the shared pool of all class
backgrounds — so at rho=0 the background carries no label information
at all, and at rho=1 it identifies the class.

Every image is generated from its own ``SeedSequence((corpus seed,
split, class, index))`` stream, so corpora are reproducible bit for bit
and generation order (serial or parallel) cannot matter.

:func:`inject_artefact` stamps a small high-contrast checkerboard tag
into a corner of selected-class images, reproducing the mechanism by
which a class-correlated artefact (rather than the object) can drive a
classifier.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import SpecError
from .imaging import BoundingBox, Image

SHAPES = ("disk", "cross")
TEXTURE_KINDS = ("grating", "noise")


@dataclass(frozen=True)
class TextureParams:
    """Procedural texture: an oriented sinusoid or band-limited noise.

    `frequency` is in cycles per pixel; for noise it is the band center
    and `bandwidth` its half-width. `orientation` is radians from the
    x axis. Values oscillate around `level` with amplitude `contrast`.
    """

    kind: str
    frequency: float
    orientation: float = 0.0
    contrast: float = 0.3
    level: float = 0.5
    bandwidth: float = 0.05
    random_phase: bool = True

    def __post_init__(self):
        if self.kind not in TEXTURE_KINDS:
            raise SpecError(f"unknown texture kind {self.kind!r}")
        if not 0.0 < self.frequency <= 0.5:
            raise SpecError("texture frequency must be in (0, 0.5] cycles/px")
        if self.contrast < 0.0 or not 0.0 <= self.level <= 1.0:
            raise SpecError("texture contrast/level out of range")


@dataclass(frozen=True)
class ClassSpec:
    name: str
    shape: str
    shape_size: int
    object_texture: TextureParams
    background_texture: TextureParams

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise SpecError(f"unknown shape {self.shape!r}")
        if self.shape_size < 3:
            raise SpecError("shape size must be at least 3 pixels")


@dataclass(frozen=True)
class CorpusSpec:
    width: int
    height: int
    classes: tuple[ClassSpec, ...]
    context_correlation: float
    train_per_class: int
    test_per_class: int
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.context_correlation <= 1.0:
            raise SpecError("context correlation must lie in [0, 1]")
        if self.train_per_class < 1 or self.test_per_class < 1:
            raise SpecError("train/test counts must be >= 1")
        if len(self.classes) < 1:
            raise SpecError("need at least one class")
        names = [c.name for c in self.classes]
        if len(set(names)) != len(names):
            raise SpecError("class names must be distinct")
        bgs = [c.background_texture for c in self.classes]
        objs = [c.object_texture for c in self.classes]
        if len(set(bgs)) != len(bgs) or len(set(objs)) != len(objs):
            raise SpecError("textures must be distinct across classes")
        for c in self.classes:
            if c.shape_size > min(self.width, self.height):
                raise SpecError(f"object {c.name!r} larger than the image")

    @property
    def class_names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.classes)


@dataclass(frozen=True)
class LabeledImage:
    image: Image
    labels: tuple[str, ...]
    boxes: tuple[BoundingBox, ...]
    image_id: str
    flags: tuple[str, ...] = ()

    def __post_init__(self):
        for box in self.boxes:
            if box.xmax >= self.image.width or box.ymax >= self.image.height:
                raise SpecError(f"box {box} exceeds image bounds")


def render_texture(params: TextureParams, width: int, height: int,
                   rng: np.random.Generator) -> np.ndarray:
    """Texture values in [0, 1], shape (height, width)."""
    if params.kind == "grating":
        phase = rng.uniform(0.0, 2.0 * np.pi) if params.random_phase else 0.0
        y, x = np.mgrid[0:height, 0:width].astype(np.float64)
        carrier = x * np.cos(params.orientation) + y * np.sin(params.orientation)
        values = params.level + params.contrast * np.sin(
            2.0 * np.pi * params.frequency * carrier + phase)
    else:
        white = rng.standard_normal((height, width))
        fy = np.fft.fftfreq(height)[:, None]
        fx = np.fft.fftfreq(width)[None, :]
        radius = np.sqrt(fx * fx + fy * fy)
        lo = max(params.frequency - params.bandwidth, 1e-6)
        hi = params.frequency + params.bandwidth
        band = (radius >= lo) & (radius <= hi)
        spectrum = np.fft.fft2(white) * band
        filtered = np.fft.ifft2(spectrum).real
        std = filtered.std()
        if std > 0.0:
            filtered = filtered / std
        values = params.level + params.contrast * filtered
    return np.clip(values, 0.0, 1.0)


def shape_mask(shape: str, size: int, center: tuple[int, int],
               width: int, height: int) -> np.ndarray:
    """Boolean object mask; `center` is (cx, cy)."""
    cx, cy = center
    y, x = np.mgrid[0:height, 0:width]
    dx, dy = x - cx, y - cy
    half = size / 2.0
    if shape == "disk":
        return dx * dx + dy * dy <= half * half
    arm = max(size // 4, 1) / 2.0
    horiz = (np.abs(dy) <= arm) & (np.abs(dx) <= half)
    vert = (np.abs(dx) <= arm) & (np.abs(dy) <= half)
    return horiz | vert


def _tight_box(mask: np.ndarray, label: str) -> BoundingBox:
    ys, xs = np.nonzero(mask)
    return BoundingBox(label, int(xs.min()), int(ys.min()), int(xs.max()), int(ys.max()))


def _render_one(spec: CorpusSpec, class_idx: int, split: int, index: int) -> LabeledImage:
    cls = spec.classes[class_idx]
    rng = np.random.default_rng(
        np.random.SeedSequence((spec.seed, split, class_idx, index)))
    # Background choice implements the context correlation.
    if rng.random() < spec.context_correlation:
        bg_cls = cls
    else:
        bg_cls = spec.classes[rng.integers(0, len(spec.classes))]
    pixels = render_texture(bg_cls.background_texture, spec.width, spec.height, rng)
    half = cls.shape_size // 2 + 1
    cx = int(rng.integers(half, spec.width - half))
    cy = int(rng.integers(half, spec.height - half))
    mask = shape_mask(cls.shape, cls.shape_size, (cx, cy), spec.width, spec.height)
    obj = render_texture(cls.object_texture, spec.width, spec.height, rng)
    pixels = np.where(mask, obj, pixels)
    split_name = "train" if split == 0 else "test"
    image_id = f"{split_name}-{cls.name}-{index:04d}"
    return LabeledImage(Image(pixels), (cls.name,), (_tight_box(mask, cls.name),),
                        image_id)


def generate_corpus(spec: CorpusSpec) -> tuple[list[LabeledImage], list[LabeledImage]]:
    """Deterministic (train, test) lists, grouped by class then index."""
    train = [_render_one(spec, ci, 0, i)
             for ci in range(len(spec.classes))
             for i in range(spec.train_per_class)]
    test = [_render_one(spec, ci, 1, i)
            for ci in range(len(spec.classes))
            for i in range(spec.test_per_class)]
    return train, test


def checkerboard_tag(size: int = 8, cell: int = 2) -> np.ndarray:
    """High-contrast checkerboard patch used as the corner artefact."""
    y, x = np.mgrid[0:size, 0:size]
    return (((x // cell) + (y // cell)) % 2).astype(np.float64)


def inject_artefact(img: LabeledImage, class_filter: str,
                    tag_patch: np.ndarray | None = None) -> LabeledImage:
    """Stamp the tag into a corner of images of the filtered class.

    The bottom-left corner is preferred; if it intersects a bounding
    box, the other corners are tried. When no corner is box-free the
    patch still goes bottom-left and the image is flagged.
    """
    if class_filter not in img.labels:
        return img
    tag = checkerboard_tag() if tag_patch is None else np.asarray(tag_patch, dtype=np.float64)
    th, tw = tag.shape
    w, h = img.image.width, img.image.height
    if tw > w or th > h:
        raise SpecError(f"tag {tw}x{th} does not fit in a {w}x{h} image")
    corners = [(0, h - th), (w - tw, h - th), (0, 0), (w - tw, 0)]
    flags = tuple(f for f in img.flags
                  if f != "tag-overlaps-box" and not f.startswith("tag-at-"))

    def overlaps(x0, y0):
        return any(box.xmin <= x0 + tw - 1 and box.xmax >= x0 and
                   box.ymin <= y0 + th - 1 and box.ymax >= y0
                   for box in img.boxes)

    placed = next(((x0, y0) for x0, y0 in corners if not overlaps(x0, y0)), None)
    if placed is None:
        placed = corners[0]
        flags = flags + ("tag-overlaps-box",)
    x0, y0 = placed
    flags = flags + (f"tag-at-{x0}-{y0}",)
    pixels = img.image.pixels.copy()
    if pixels.ndim == 3:
        pixels[y0:y0 + th, x0:x0 + tw, :] = tag[:, :, None]
    else:
        pixels[y0:y0 + th, x0:x0 + tw] = tag
    return replace(img, image=Image(pixels), flags=flags)


def label_vectors(images: list[LabeledImage], classes: tuple[str, ...]) -> dict:
    """Per-class +/-1 label arrays aligned with the image list."""
    return {c: np.array([1.0 if c in im.labels else -1.0 for im in images])
            for c in classes}


# ---------------------------------------------------------------------------
# Corpus presets used by the experiments and the command-line pipeline.


def two_class_spec(rho: float, seed: int = 0, train_per_class: int = 100,
                   test_per_class: int = 20, size: int = 64) -> CorpusSpec:
    """Disk-vs-cross corpus with orientation-coded background context.

    Backgrounds are mid-frequency gratings whose orientation (vertical
    vs horizontal stripes) is the context signal; they oscillate around
    mid-gray with a random phase per image, so after block-mean
    downscaling their class identity is hard to read off raw pixels.
    Objects are bright, coarsely textured shapes: easy for a pixel
    model (silhouette on mid-gray) and discriminative for a gradient
    descriptor at full resolution (boundary statistics + fill
    orientation).
    """
    disk = ClassSpec(
        name="disk", shape="disk", shape_size=22,
        object_texture=TextureParams("grating", frequency=0.125,
                                     orientation=np.pi / 4.0,
                                     contrast=0.15, level=0.82),
        background_texture=TextureParams("grating", frequency=0.25,
                                         orientation=0.0, contrast=0.35,
                                         level=0.45))
    cross = ClassSpec(
        name="cross", shape="cross", shape_size=30,
        object_texture=TextureParams("grating", frequency=0.125,
                                     orientation=3.0 * np.pi / 4.0,
                                     contrast=0.15, level=0.82),
        background_texture=TextureParams("grating", frequency=0.25,
                                         orientation=np.pi / 2.0, contrast=0.35,
                                         level=0.45))
    return CorpusSpec(size, size, (disk, cross), rho, train_per_class,
                      test_per_class, seed)


def artefact_pair_spec(seed: int = 0, train_per_class: int = 100,
                       test_per_class: int = 20, size: int = 64) -> CorpusSpec:
    """Two classes whose content is practically indistinguishable.

    The texture parameters differ only by a rotation far below the
    descriptor's orientation resolution, so neither objects nor
    backgrounds carry a usable class signal. Pair this corpus with
    ``inject_artefact`` on one class: the stamped corner tag is then
    the only reliable cue, the setting in which a classifier provably
    keys on an artefact rather than on content.
    """
    delta = 0.02
    def cls(name: str, tilt: float) -> ClassSpec:
        return ClassSpec(
            name=name, shape="disk", shape_size=22,
            object_texture=TextureParams("grating", frequency=0.125,
                                         orientation=np.pi / 4.0 + tilt,
                                         contrast=0.15, level=0.82),
            background_texture=TextureParams("grating", frequency=0.25,
                                             orientation=tilt, contrast=0.35,
                                             level=0.45))
    return CorpusSpec(size, size, (cls("tagged", 0.0), cls("plain", delta)),
                      0.0, train_per_class, test_per_class, seed)
