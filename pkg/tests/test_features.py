import cv2
import numpy as np
import pytest

from edgesched.errors import FeatureExtractionError, NormalizationError
from edgesched.features import (
    FEATURE_NAMES,
    SATURATION_FEATURE,
    FeatureVector,
    denormalize,
    extract_batch,
    extract_features,
    fit_normalizer,
    list_images,
    normalize,
    read_features_csv,
    texture_features,
    write_features_csv,
)

OFFSETS = ((0, 1), (1, 1), (1, 0), (1, -1))


def glcm_contrast(levels: np.ndarray, offset) -> float:
    """Symmetric normalized co-occurrence contrast, counted pixel pair by pixel pair."""
    dr, dc = offset
    rows, cols = levels.shape
    total, weighted = 0, 0.0
    for r in range(rows):
        for c in range(cols):
            r2, c2 = r + dr, c + dc
            if 0 <= r2 < rows and 0 <= c2 < cols:
                total += 2
                weighted += 2 * float(int(levels[r, c]) - int(levels[r2, c2])) ** 2
    return weighted / total


def checkerboard(size=8):
    board = (np.indices((size, size)).sum(axis=0) % 2 * 255).astype(np.uint8)
    return np.dstack([board] * 3)


def test_feature_names():
    assert len(FEATURE_NAMES) == 29
    assert FEATURE_NAMES[:4] == ("kpNum", "brightnessMean", "brightnessRMS", "size")
    assert FEATURE_NAMES[-1] == "correlation4"


def test_flat_gray_image():
    fv = extract_features(np.full((32, 32, 3), 128, dtype=np.uint8), encoded_size_bytes=500)
    assert fv["brightnessMean"] == pytest.approx(128.0)
    assert fv["brightnessRMS"] == pytest.approx(128.0)
    assert fv["size"] == 500.0
    assert fv["edgeNum"] == 0.0
    assert fv["cornerNum"] == 0.0
    assert fv["contoursNum"] == 0.0
    assert fv["maxPointNum"] == 0.0
    assert fv["area"] == 0.0
    assert fv["arcLength"] == 0.0
    for i in range(1, 5):
        assert fv[f"contrast{i}"] == 0.0
        assert fv[f"homogeneity{i}"] == pytest.approx(1.0)
        assert fv[f"energy{i}"] == pytest.approx(1.0)
        assert fv[f"correlation{i}"] == 0.0


def test_channel_means():
    raster = np.zeros((16, 16, 3), dtype=np.uint8)
    raster[:, :, 0] = 255
    fv = extract_features(raster, encoded_size_bytes=100)
    assert (fv["redMean"], fv["greenMean"], fv["blueMean"]) == (255.0, 0.0, 0.0)


def test_checkerboard_contrast():
    raster = checkerboard()
    fv = extract_features(raster, encoded_size_bytes=64)
    levels = raster[:, :, 0] // 32
    assert set(np.unique(levels)) == {0, 7}
    for i, offset in enumerate(OFFSETS, start=1):
        assert fv[f"contrast{i}"] == pytest.approx(glcm_contrast(levels, offset))
    assert fv["contrast1"] == pytest.approx(49.0)
    assert fv["contrast2"] == pytest.approx(0.0)


def test_rotation_swaps_texture_angles():
    gray = np.random.default_rng(3).integers(0, 256, size=(24, 24), dtype=np.uint8)
    original = texture_features(gray)
    rotated = texture_features(np.ascontiguousarray(np.rot90(gray)))
    for prop in ("contrast", "homogeneity", "energy"):
        assert rotated[prop][0] == pytest.approx(original[prop][2])
        assert rotated[prop][2] == pytest.approx(original[prop][0])
        assert rotated[prop][1] == pytest.approx(original[prop][3])
        assert rotated[prop][3] == pytest.approx(original[prop][1])


def test_deterministic():
    raster = np.random.default_rng(5).integers(0, 256, size=(40, 30, 3), dtype=np.uint8)
    assert extract_features(raster, 1000) == extract_features(raster.copy(), 1000)


def test_saturation_feature():
    fv = extract_features(np.zeros((8, 8, 3), dtype=np.uint8), 10, include_saturation=True)
    assert len(fv) == 30
    assert fv.names[-1] == SATURATION_FEATURE


@pytest.mark.parametrize(
    "raster",
    [
        np.zeros((2, 2, 3), dtype=np.uint8),
        np.zeros((8, 8), dtype=np.uint8),
        np.zeros((8, 8, 3), dtype=np.float32),
        None,
    ],
)
def test_rejects_bad_rasters(raster):
    with pytest.raises(FeatureExtractionError):
        extract_features(raster, 10)


def test_unknown_keypoint_detector():
    with pytest.raises(FeatureExtractionError):
        extract_features(np.zeros((8, 8, 3), dtype=np.uint8), 10, keypoints="orb")


def test_batch_keeps_order_and_reports_failures(tmp_path):
    rng = np.random.default_rng(0)
    for name in ("b", "c"):
        cv2.imwrite(str(tmp_path / f"{name}.png"), rng.integers(0, 256, size=(16, 16, 3), dtype=np.uint8))
    (tmp_path / "a.png").write_bytes(b"not an image")
    (tmp_path / "notes.txt").write_text("ignored")

    paths = list_images(tmp_path)
    assert [p.name for p in paths] == ["a.png", "b.png", "c.png"]
    rows, failures = extract_batch(paths, workers=2)
    assert [image_id for image_id, _ in rows] == ["b", "c"]
    assert [image_id for image_id, _ in failures] == ["a"]
    assert rows[0][1]["size"] == (tmp_path / "b.png").stat().st_size


def test_batch_rejects_shared_image_ids(tmp_path):
    raster = np.full((16, 16, 3), 90, dtype=np.uint8)
    cv2.imwrite(str(tmp_path / "a.png"), raster)
    cv2.imwrite(str(tmp_path / "a.jpg"), raster)
    cv2.imwrite(str(tmp_path / "b.png"), raster)

    with pytest.raises(FeatureExtractionError, match="more than one file") as info:
        extract_batch(list_images(tmp_path))
    assert info.value.payload == {"image_ids": ["a"]}


class TestNormalizer:
    def vectors(self, *rows):
        return [FeatureVector(np.full(29, v, dtype=np.float64)) for v in rows]

    def test_zero_spread(self):
        stats = fit_normalizer(self.vectors(3.0, 3.0))
        assert stats.std == (0.0,) * 29
        assert normalize(self.vectors(7.0)[0], stats).values.tolist() == [0.0] * 29

    def test_population_std(self):
        stats = fit_normalizer(self.vectors(0.0, 10.0))
        assert stats.mean[0] == 5.0
        assert stats.std[0] == 5.0
        assert normalize(self.vectors(10.0)[0], stats).values[0] == pytest.approx(1.0)

    def test_matches_two_pass(self):
        matrix = np.random.default_rng(2).normal(50.0, 20.0, size=(100, 29))
        stats = fit_normalizer([FeatureVector(row) for row in matrix])
        mean = matrix.sum(axis=0) / 100
        std = np.sqrt(((matrix - mean) ** 2).sum(axis=0) / 100)
        assert np.allclose(stats.mean, mean)
        assert np.allclose(stats.std, std)

    def test_denormalize_inverts(self):
        matrix = np.random.default_rng(4).normal(size=(10, 29))
        rows = [FeatureVector(row) for row in matrix]
        stats = fit_normalizer(rows)
        restored = denormalize(normalize(rows[3], stats), stats)
        assert np.allclose(restored.values, rows[3].values)

    def test_needs_two_rows(self):
        with pytest.raises(NormalizationError):
            fit_normalizer(self.vectors(1.0))


def test_features_csv(tmp_path):
    matrix = np.random.default_rng(6).normal(size=(3, 29))
    rows = [(f"img{i}", FeatureVector(row)) for i, row in enumerate(matrix)]
    path = write_features_csv(tmp_path / "features.csv", rows)
    loaded = read_features_csv(path)
    assert list(loaded) == ["img0", "img1", "img2"]
    assert loaded["img1"] == rows[1][1]
