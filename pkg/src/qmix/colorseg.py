"""Color segmentation in L*a*b*: binarize, colorize, recover, score.

A binary image gets each pixel colored from its class's 3D Gaussian in
L*a*b*; both mixture engines then recover the two classes from the pixel
cloud and every pixel is re-assigned by the sign of the responsibility
difference. Conversions implement the standard sRGB <-> XYZ (D65) <-> Lab
pipeline in double precision.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image

from .classical import ConvergenceConfig, classical_fit, random_init
from .core import Dataset, GaussianClass
from .errors import QmixError, UnsupportedFormat
from .quantum import quantum_fit, random_init2

D65_WHITE = (0.95047, 1.0, 1.08883)

_SRGB_TO_XYZ = np.array(
    [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ]
)
_XYZ_TO_SRGB = np.linalg.inv(_SRGB_TO_XYZ)
_DELTA = 6.0 / 29.0


def _f_lab(t):
    t = np.asarray(t, dtype=float)
    cube = _DELTA**3
    return np.where(t > cube, np.cbrt(t), t / (3.0 * _DELTA**2) + 4.0 / 29.0)


def _f_lab_inv(ft):
    ft = np.asarray(ft, dtype=float)
    return np.where(ft > _DELTA, ft**3, 3.0 * _DELTA**2 * (ft - 4.0 / 29.0))


def srgb_to_lab(rgb, white=D65_WHITE):
    """sRGB (0..255) to L*a*b*; accepts a triple or an (..., 3) array."""
    arr = np.asarray(rgb, dtype=float)
    squeeze = arr.ndim == 1
    arr = np.atleast_2d(arr) / 255.0
    lin = np.where(arr <= 0.04045, arr / 12.92, ((arr + 0.055) / 1.055) ** 2.4)
    xyz = lin @ _SRGB_TO_XYZ.T
    fx = _f_lab(xyz[..., 0] / white[0])
    fy = _f_lab(xyz[..., 1] / white[1])
    fz = _f_lab(xyz[..., 2] / white[2])
    lab = np.stack([116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)], axis=-1)
    return lab[0] if squeeze else lab


def lab_to_srgb(lab, white=D65_WHITE):
    """L*a*b* back to 8-bit sRGB; returns (rgb, clipped flag).

    Out-of-gamut values clamp into [0, 255]; ``clipped`` reports whether any
    channel needed more than a half quantization step of clamping.
    """
    arr = np.asarray(lab, dtype=float)
    squeeze = arr.ndim == 1
    arr = np.atleast_2d(arr)
    fy = (arr[..., 0] + 16.0) / 116.0
    fx = fy + arr[..., 1] / 500.0
    fz = fy - arr[..., 2] / 200.0
    xyz = np.stack(
        [
            white[0] * _f_lab_inv(fx),
            white[1] * _f_lab_inv(fy),
            white[2] * _f_lab_inv(fz),
        ],
        axis=-1,
    )
    lin = xyz @ _XYZ_TO_SRGB.T
    srgb = np.where(
        lin <= 0.0031308, 12.92 * lin, 1.055 * np.abs(lin) ** (1.0 / 2.4) - 0.055
    )
    raw = srgb * 255.0
    clipped = bool((raw < -0.5).any() or (raw > 255.5).any())
    rgb = np.clip(np.rint(raw), 0.0, 255.0).astype(np.uint8)
    return (rgb[0], clipped) if squeeze else (rgb, clipped)


def binarize(rgb: np.ndarray, threshold: int = 100) -> np.ndarray:
    """1 where R, G and B all exceed ``threshold`` (strict), else 0."""
    arr = np.asarray(rgb)
    if arr.dtype != np.uint8 or arr.ndim != 3 or arr.shape[2] != 3:
        raise UnsupportedFormat("expected an 8-bit RGB image (H x W x 3 uint8)")
    mask = (
        (arr[:, :, 0] > threshold)
        & (arr[:, :, 1] > threshold)
        & (arr[:, :, 2] > threshold)
    )
    return mask.astype(np.uint8)


@dataclass(frozen=True)
class LabImage:
    """Per-pixel L*a*b* values. Synthetic colorings may leave the sRGB gamut,
    so channel ranges are not enforced here, only finiteness."""

    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.ndim != 3 or vals.shape[2] != 3:
            raise ValueError("expected an H x W x 3 array")
        if vals.shape[0] < 1 or vals.shape[1] < 1:
            raise ValueError("image dimensions must be positive")
        if not np.all(np.isfinite(vals)):
            raise ValueError("Lab channels contain NaN or Inf")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def dataset(self) -> Dataset:
        return Dataset(self.values.reshape(-1, 3))


@dataclass(frozen=True)
class ColorizeTruth:
    """Ground truth attached to a synthetic coloring."""

    mask: np.ndarray
    class_black: GaussianClass
    class_white: GaussianClass
    n_black: int
    n_white: int


def colorize(mask: np.ndarray, class_black: GaussianClass,
             class_white: GaussianClass, seed: int):
    """Sample each pixel's Lab color from its class Gaussian.

    Draws one standard-normal block for the whole image, so the result is
    deterministic per seed and independent of class layout.
    """
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise ValueError("mask must be H x W")
    if class_black.d != 3 or class_white.d != 3:
        raise ValueError("color classes must be 3D (Lab)")
    h, w = mask.shape
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((h, w, 3))
    white = mask.astype(bool)
    vals = np.where(
        white[:, :, None],
        class_white.mu + z @ class_white.chol.T,
        class_black.mu + z @ class_black.chol.T,
    )
    truth = ColorizeTruth(
        mask=mask.astype(np.uint8),
        class_black=class_black,
        class_white=class_white,
        n_black=int((~white).sum()),
        n_white=int(white.sum()),
    )
    return LabImage(values=vals), truth


@dataclass
class SegmentationResult:
    """Recovered two-class segmentation of a Lab image."""

    engine: str
    mask: np.ndarray
    centers: dict
    variances: dict
    counts: dict
    errors: dict | None
    misassigned: int | None
    objective: float
    trials: int


def _combined_error(est: np.ndarray, true: np.ndarray) -> float:
    return float(np.sqrt(np.sum((np.asarray(true) - np.asarray(est)) ** 2)))


def assign_black(q_black: np.ndarray, q_white: np.ndarray) -> np.ndarray:
    """Pixel goes to black only when its black responsibility strictly
    exceeds the white one; exact ties stay white."""
    return np.asarray(q_black) > np.asarray(q_white)


def segment(
    image: LabImage,
    engine: str,
    seed: int,
    truth: ColorizeTruth | None = None,
    trials: int = 10,
    cfg: ConvergenceConfig = ConvergenceConfig(),
) -> SegmentationResult:
    """Fit the chosen engine on the pixel cloud and assign per-pixel classes.

    Runs ``trials`` seeded fits and keeps the median-by-objective run; a
    pixel goes to "black" when its black-class responsibility strictly
    exceeds the white one. With ground truth attached, fitted classes are
    matched by minimal combined center error and the result carries the
    per-parameter combined errors plus the misassignment count.
    """
    data = image.dataset()
    runs = []
    failures = []
    for t in range(max(trials, 1)):
        init_seed = np.random.SeedSequence([int(seed), t]).generate_state(1)[0]
        rng = np.random.default_rng(int(init_seed))
        try:
            if engine == "classical":
                rep = classical_fit(data, random_init(data, 2, rng), cfg)
                mix = rep.params_final
                centers = [cls.mu for cls in mix.classes]
                covs = [cls.cov for cls in mix.classes]
            elif engine == "quantum":
                rep = quantum_fit(data, random_init2(data, rng), cfg)
                mix = rep.params_final
                centers = [mix.class1.mu, mix.class2.mu]
                covs = [mix.class1.cov, mix.class2.cov]
            else:
                raise ValueError(f"unknown engine {engine!r}")
        except QmixError as exc:
            failures.append(exc)
            continue
        runs.append((float(rep.objective_trace[-1]), rep, centers, covs))
    if not runs:
        raise QmixError(f"all {trials} segmentation fits failed: {failures[-1]}")
    runs.sort(key=lambda r: r[0])
    _, rep, centers, covs = runs[len(runs) // 2]

    q = rep.responsibilities.q
    counts = rep.n_per_class

    if truth is not None:
        true_centers = [truth.class_black.mu, truth.class_white.mu]
        d_id = _combined_error(centers[0], true_centers[0]) + _combined_error(
            centers[1], true_centers[1]
        )
        d_sw = _combined_error(centers[0], true_centers[1]) + _combined_error(
            centers[1], true_centers[0]
        )
        black_idx = 0 if d_id <= d_sw else 1
    else:
        black_idx = int(np.argmin([centers[0][0], centers[1][0]]))
    white_idx = 1 - black_idx

    black_pixels = assign_black(q[:, black_idx], q[:, white_idx])
    mask = (~black_pixels).astype(np.uint8).reshape(image.height, image.width)

    result = SegmentationResult(
        engine=engine,
        mask=mask,
        centers={"black": centers[black_idx].tolist(), "white": centers[white_idx].tolist()},
        variances={
            "black": np.diag(covs[black_idx]).tolist(),
            "white": np.diag(covs[white_idx]).tolist(),
        },
        counts={"black": float(counts[black_idx]), "white": float(counts[white_idx])},
        errors=None,
        misassigned=None,
        objective=float(rep.objective_trace[-1]),
        trials=trials,
    )
    if truth is not None:
        errors = {
            "mu_black": _combined_error(centers[black_idx], truth.class_black.mu),
            "mu_white": _combined_error(centers[white_idx], truth.class_white.mu),
            "var_black": _combined_error(
                np.diag(covs[black_idx]), np.diag(truth.class_black.cov)
            ),
            "var_white": _combined_error(
                np.diag(covs[white_idx]), np.diag(truth.class_white.cov)
            ),
            "n_black": abs(float(counts[black_idx]) - truth.n_black),
            "n_white": abs(float(counts[white_idx]) - truth.n_white),
        }
        result.errors = errors
        result.misassigned = int((mask != truth.mask).sum())
    return result


def read_rgb_png(path) -> np.ndarray:
    """Load an image file as an H x W x 3 uint8 array."""
    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"), dtype=np.uint8)


def write_rgb_png(path, rgb: np.ndarray) -> None:
    Image.fromarray(np.asarray(rgb, dtype=np.uint8), mode="RGB").save(path, format="PNG")


def write_mask_png(path, mask: np.ndarray) -> None:
    """Write a binary mask as an 8-bit grayscale PNG with values {0, 255}."""
    arr = (np.asarray(mask, dtype=np.uint8) > 0).astype(np.uint8) * 255
    Image.fromarray(arr, mode="L").save(path, format="PNG")


def read_mask_png(path) -> np.ndarray:
    with Image.open(path) as img:
        arr = np.asarray(img.convert("L"))
    return (arr > 127).astype(np.uint8)
