"""
Image-complexity features and their z-score normalization.

The descriptor has 13 scalar features followed by four GLCM texture
statistics, each measured in four directions (0, 45, 90 and 135 degrees).
Texture statistics are computed on grayscale quantized to 8 levels, at
distance 1, with a symmetric and normalized co-occurrence matrix.
"""

import logging
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Dict, List, Sequence, Tuple, Union

import cv2
import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict
from skimage.feature import graycomatrix, graycoprops

from .errors import FeatureExtractionError, NormalizationError

logger = logging.getLogger(__name__)

SCALAR_FEATURES = (
    "kpNum",
    "brightnessMean",
    "brightnessRMS",
    "size",
    "cornerNum",
    "edgeNum",
    "contoursNum",
    "maxPointNum",
    "area",
    "arcLength",
    "redMean",
    "greenMean",
    "blueMean",
)
TEXTURE_PROPS = ("contrast", "homogeneity", "energy", "correlation")
GLCM_ANGLES = (0.0, np.pi / 4, np.pi / 2, 3 * np.pi / 4)
GLCM_LEVELS = 8

FEATURE_NAMES: Tuple[str, ...] = SCALAR_FEATURES + tuple(
    f"{prop}{i}" for prop in TEXTURE_PROPS for i in range(1, len(GLCM_ANGLES) + 1)
)
SATURATION_FEATURE = "saturationMean"
IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff"}

HARRIS_BLOCK_SIZE = 2
HARRIS_APERTURE = 3
HARRIS_K = 0.04
HARRIS_THRESHOLD = 0.01
CANNY_LOW = 100
CANNY_HIGH = 200


def feature_names(include_saturation: bool = False) -> Tuple[str, ...]:
    return FEATURE_NAMES + ((SATURATION_FEATURE,) if include_saturation else ())


class FeatureVector:
    """Named, fixed-order feature values for one image."""

    __slots__ = ("names", "values")

    def __init__(self, values, names: Sequence[str] = FEATURE_NAMES):
        arr = np.asarray(values, dtype=np.float64).reshape(-1)
        if arr.shape[0] != len(names):
            raise ValueError(f"expected {len(names)} feature values, got {arr.shape[0]}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("feature values must be finite")
        self.names = tuple(names)
        self.values = arr

    @classmethod
    def from_mapping(cls, mapping: Dict[str, float], names: Sequence[str] = FEATURE_NAMES):
        return cls([mapping[n] for n in names], names)

    def as_dict(self) -> Dict[str, float]:
        return {n: float(v) for n, v in zip(self.names, self.values)}

    def __getitem__(self, name: str) -> float:
        return float(self.values[self.names.index(name)])

    def __len__(self):
        return len(self.names)

    def __eq__(self, other):
        return (
            isinstance(other, FeatureVector)
            and self.names == other.names
            and np.array_equal(self.values, other.values)
        )

    def __repr__(self):
        return f"FeatureVector({self.as_dict()})"


class NormStats(BaseModel):
    """Per-feature population mean and standard deviation of a training split."""

    model_config = ConfigDict(frozen=True)

    names: Tuple[str, ...]
    mean: Tuple[float, ...]
    std: Tuple[float, ...]

    def mean_array(self) -> np.ndarray:
        return np.asarray(self.mean, dtype=np.float64)

    def std_array(self) -> np.ndarray:
        return np.asarray(self.std, dtype=np.float64)


# --- key point detectors -----------------------------------------------------


def _count_sift(gray: np.ndarray) -> int:
    # detector stage only; descriptors are never computed
    return len(cv2.SIFT_create().detect(gray, None))


def _count_fast(gray: np.ndarray) -> int:
    return len(cv2.FastFeatureDetector_create().detect(gray, None))


KEYPOINT_DETECTORS: Dict[str, Callable[[np.ndarray], int]] = {
    "sift": _count_sift,
    "fast": _count_fast,
}


# --- extraction ----------------------------------------------------------------


def _check_raster(image) -> np.ndarray:
    if image is None:
        raise FeatureExtractionError("image could not be read")
    img = np.asarray(image)
    if img.ndim != 3 or img.shape[2] != 3:
        raise FeatureExtractionError(f"expected an RGB raster (H, W, 3), got shape {img.shape}")
    if img.dtype != np.uint8:
        raise FeatureExtractionError(f"expected 8-bit channels, got {img.dtype}")
    if img.shape[0] < 3 or img.shape[1] < 3:
        raise FeatureExtractionError(f"image {img.shape[1]}x{img.shape[0]} is smaller than 3x3")
    return np.ascontiguousarray(img)


def _harris_corner_count(gray: np.ndarray) -> int:
    response = cv2.cornerHarris(np.float32(gray), HARRIS_BLOCK_SIZE, HARRIS_APERTURE, HARRIS_K)
    peak = float(response.max())
    if peak <= 0.0:
        return 0
    return int(np.count_nonzero(response > HARRIS_THRESHOLD * peak))


def _contour_stats(edges: np.ndarray) -> Tuple[int, int, float, float]:
    found = cv2.findContours(edges, cv2.RETR_EXTERNAL, cv2.CHAIN_APPROX_NONE)
    contours = found[-2]  # OpenCV 3 returns (image, contours, hierarchy)
    if not contours:
        return 0, 0, 0.0, 0.0
    longest = max(contours, key=len)  # first contour wins ties
    return (
        len(contours),
        len(longest),
        float(cv2.contourArea(longest)),
        float(cv2.arcLength(longest, True)),
    )


def _glcm_correlation(glcm: np.ndarray) -> np.ndarray:
    """Correlation per angle; 0 where the gray-level variance vanishes."""
    levels = np.arange(glcm.shape[0], dtype=np.float64)
    out = np.zeros(glcm.shape[3], dtype=np.float64)
    for a in range(glcm.shape[3]):
        p = glcm[:, :, 0, a].astype(np.float64)
        mu_i = float((levels[:, None] * p).sum())
        mu_j = float((levels[None, :] * p).sum())
        var_i = float((((levels - mu_i) ** 2)[:, None] * p).sum())
        var_j = float((((levels - mu_j) ** 2)[None, :] * p).sum())
        if var_i <= 0.0 or var_j <= 0.0:
            continue
        cov = float((np.outer(levels - mu_i, levels - mu_j) * p).sum())
        out[a] = cov / np.sqrt(var_i * var_j)
    return out


def texture_features(gray: np.ndarray) -> Dict[str, np.ndarray]:
    quantized = (gray // (256 // GLCM_LEVELS)).astype(np.uint8)
    glcm = graycomatrix(
        quantized,
        distances=[1],
        angles=list(GLCM_ANGLES),
        levels=GLCM_LEVELS,
        symmetric=True,
        normed=True,
    )
    return {
        "contrast": graycoprops(glcm, "contrast")[0],
        "homogeneity": graycoprops(glcm, "homogeneity")[0],
        "energy": graycoprops(glcm, "energy")[0],
        "correlation": _glcm_correlation(glcm),
    }


def extract_features(
    image,
    encoded_size_bytes: int,
    keypoints: str = "sift",
    include_saturation: bool = False,
) -> FeatureVector:
    """
    Compute the complexity descriptor of an 8-bit RGB raster.

    Args:
        image: array of shape (H, W, 3), dtype uint8, RGB channel order, H and W >= 3.
        encoded_size_bytes: size of the encoded image file, reported as the ``size`` feature.
        keypoints: key point detector name, one of KEYPOINT_DETECTORS.
        include_saturation: append the optional saturationMean feature.

    Raises:
        FeatureExtractionError: unreadable or undersized image.
    """
    rgb = _check_raster(image)
    if encoded_size_bytes < 0:
        raise FeatureExtractionError(f"negative encoded size {encoded_size_bytes}")
    try:
        count_keypoints = KEYPOINT_DETECTORS[keypoints]
    except KeyError:
        raise FeatureExtractionError(f"unknown key point detector '{keypoints}'")

    gray = cv2.cvtColor(rgb, cv2.COLOR_RGB2GRAY)
    gray64 = gray.astype(np.float64)
    edges = cv2.Canny(gray, CANNY_LOW, CANNY_HIGH)
    contours_num, max_points, area, arc_length = _contour_stats(edges)

    values: Dict[str, float] = {
        "kpNum": float(count_keypoints(gray)),
        "brightnessMean": float(gray64.mean()),
        "brightnessRMS": float(np.sqrt((gray64**2).mean())),
        "size": float(encoded_size_bytes),
        "cornerNum": float(_harris_corner_count(gray)),
        "edgeNum": float(np.count_nonzero(edges)),
        "contoursNum": float(contours_num),
        "maxPointNum": float(max_points),
        "area": area,
        "arcLength": arc_length,
        "redMean": float(rgb[:, :, 0].mean()),
        "greenMean": float(rgb[:, :, 1].mean()),
        "blueMean": float(rgb[:, :, 2].mean()),
    }
    for prop, per_angle in texture_features(gray).items():
        for i, v in enumerate(per_angle, start=1):
            values[f"{prop}{i}"] = float(v)
    if include_saturation:
        hsv = cv2.cvtColor(rgb, cv2.COLOR_RGB2HSV)
        values[SATURATION_FEATURE] = float(hsv[:, :, 1].mean())

    return FeatureVector.from_mapping(values, feature_names(include_saturation))


def load_image(path: Union[str, Path]) -> Tuple[np.ndarray, int]:
    """Decode an image file into an RGB raster; returns (raster, encoded size in bytes)."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise FeatureExtractionError(f"cannot read {path}: {e}") from e
    bgr = cv2.imdecode(np.frombuffer(data, dtype=np.uint8), cv2.IMREAD_COLOR)
    if bgr is None:
        raise FeatureExtractionError(f"cannot decode image {path}")
    return cv2.cvtColor(bgr, cv2.COLOR_BGR2RGB), len(data)


def extract_file(path: Union[str, Path], keypoints: str = "sift", include_saturation: bool = False):
    raster, size = load_image(path)
    return extract_features(raster, size, keypoints=keypoints, include_saturation=include_saturation)


def list_images(images_dir: Union[str, Path]) -> List[Path]:
    """Image files of a directory, sorted by name; a .txt/.lst manifest file lists paths instead."""
    images_dir = Path(images_dir)
    if images_dir.is_file():
        base = images_dir.parent
        lines = images_dir.read_text(encoding="utf-8").splitlines()
        return [base / line.strip() for line in lines if line.strip() and not line.startswith("#")]
    return sorted(p for p in images_dir.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)


def extract_batch(
    paths: Sequence[Union[str, Path]],
    workers: int = 1,
    keypoints: str = "sift",
    include_saturation: bool = False,
) -> Tuple[List[Tuple[str, FeatureVector]], List[Tuple[str, str]]]:
    """
    Extract features from many files; output order equals input order.

    Returns:
        (rows, failures): rows are (image_id, FeatureVector) for every readable
        image; failures are (image_id, reason) for the rest.

    Raises:
        FeatureExtractionError: two files share an image id (file stem).
    """
    counts = Counter(Path(p).stem for p in paths)
    shared = sorted(stem for stem, n in counts.items() if n > 1)
    if shared:
        raise FeatureExtractionError(
            f"image ids {shared} come from more than one file", payload={"image_ids": shared}
        )

    def _one(path):
        path = Path(path)
        try:
            return path.stem, extract_file(path, keypoints, include_saturation), None
        except FeatureExtractionError as e:
            logger.warning(f"Skipping {path}: {e.message}")
            return path.stem, None, e.message

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_one, paths))
    else:
        results = [_one(p) for p in paths]

    rows = [(image_id, fv) for image_id, fv, _ in results if fv is not None]
    failures = [(image_id, err) for image_id, _, err in results if err is not None]
    return rows, failures


# --- normalization ---------------------------------------------------------------


def fit_normalizer(rows: Sequence[FeatureVector]) -> NormStats:
    if len(rows) < 2:
        raise NormalizationError(f"need at least 2 rows to fit a normalizer, got {len(rows)}")
    names = rows[0].names
    matrix = np.vstack([r.values for r in rows])
    mean = matrix.mean(axis=0)
    std = np.sqrt(((matrix - mean) ** 2).mean(axis=0))
    return NormStats(names=names, mean=tuple(mean.tolist()), std=tuple(std.tolist()))


def normalize_matrix(matrix: np.ndarray, stats: NormStats) -> np.ndarray:
    mean, std = stats.mean_array(), stats.std_array()
    safe = np.where(std > 0.0, std, 1.0)
    return np.where(std > 0.0, (matrix - mean) / safe, 0.0)


def normalize(fv: FeatureVector, stats: NormStats) -> FeatureVector:
    """z-score every feature; features with zero spread map to 0."""
    if fv.names != stats.names:
        raise NormalizationError("feature names do not match the fitted statistics")
    return FeatureVector(normalize_matrix(fv.values, stats), fv.names)


def denormalize(fv: FeatureVector, stats: NormStats) -> FeatureVector:
    """Inverse of normalize for features with nonzero spread; zero-spread features return the mean."""
    return FeatureVector(fv.values * stats.std_array() + stats.mean_array(), fv.names)


# --- CSV -----------------------------------------------------------------------------


def write_features_csv(path: Union[str, Path], rows: Sequence[Tuple[str, FeatureVector]]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    names = rows[0][1].names if rows else FEATURE_NAMES
    frame = pd.DataFrame(
        [fv.values for _, fv in rows], columns=list(names), index=[image_id for image_id, _ in rows]
    )
    frame.index.name = "image_id"
    frame.to_csv(path, lineterminator="\n")
    return path


def read_features_csv(path: Union[str, Path]) -> Dict[str, FeatureVector]:
    frame = pd.read_csv(path, dtype={"image_id": str}, float_precision="round_trip")
    if "image_id" not in frame.columns:
        raise FeatureExtractionError(f"{path}: missing image_id column")
    names = tuple(c for c in frame.columns if c != "image_id")
    expected = FEATURE_NAMES if SATURATION_FEATURE not in names else feature_names(True)
    if names != expected:
        raise FeatureExtractionError(f"{path}: feature columns do not match the expected order")
    return {
        str(row["image_id"]): FeatureVector([row[n] for n in names], names)
        for _, row in frame.iterrows()
    }
