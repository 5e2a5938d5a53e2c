"""First-order statistics, intensity-histogram and local-intensity features."""

from __future__ import annotations

import numpy as np

from ..conventional import PEAK_RADIUS_MM, max_sphere_mean, sphere_offsets


def percentile(x: np.ndarray, q: float) -> float:
    """Nearest-rank percentile: the ceil(q/100 * n)-th smallest value."""
    return float(np.percentile(x, q, method="inverted_cdf"))


def _moments(x: np.ndarray, flags: list[str], family: str) -> dict[str, float]:
    mean = x.mean()
    d = x - mean
    m2 = (d ** 2).mean()
    if m2 > 0:
        skew = (d ** 3).mean() / m2 ** 1.5
        kurt = (d ** 4).mean() / m2 ** 2 - 3.0
    else:
        skew = kurt = 0.0
        flags.append(f"{family}-skewness:zero_variance")
    return {"mean": float(mean), "variance": float(m2), "skewness": float(skew), "kurtosis": float(kurt)}


def _dispersion(x: np.ndarray, flags: list[str], family: str) -> dict[str, float]:
    p10, p25, p75, p90 = (percentile(x, q) for q in (10, 25, 75, 90))
    med = percentile(x, 50)
    mean = x.mean()
    robust = x[(x >= p10) & (x <= p90)]
    f = {
        "median": med,
        "minimum": float(x.min()),
        "p10": p10,
        "p90": p90,
        "maximum": float(x.max()),
        "iqr": p75 - p25,
        "range": float(x.max() - x.min()),
        "mad": float(np.abs(x - mean).mean()),
        "rmad": float(np.abs(robust - robust.mean()).mean()),
        "medad": float(np.abs(x - med).mean()),
    }
    if mean != 0:
        f["cov"] = float(np.sqrt(((x - mean) ** 2).mean()) / mean)
    else:
        f["cov"] = 0.0
        flags.append(f"{family}-cov:zero_mean")
    if p75 + p25 != 0:
        f["qcod"] = (p75 - p25) / (p75 + p25)
    else:
        f["qcod"] = 0.0
        flags.append(f"{family}-qcod:zero_denominator")
    return f


def statistics_features(values) -> tuple[dict[str, float], list[str]]:
    """Statistics family on raw (resampled, undiscretized) ROI intensities."""
    x = np.asarray(values, dtype=float)
    flags: list[str] = []
    f = _moments(x, flags, "Statistic")
    f.update(_dispersion(x, flags, "Statistic"))
    f["energy"] = float((x ** 2).sum())
    f["rms"] = float(np.sqrt((x ** 2).mean()))
    return f, flags


def histogram_features(levels, n_bins: int) -> tuple[dict[str, float], list[str]]:
    """Intensity-histogram family on discretized levels."""
    x = np.asarray(levels, dtype=float)
    flags: list[str] = []
    f = _moments(x, flags, "IH")
    f.update(_dispersion(x, flags, "IH"))
    counts = np.bincount(np.asarray(levels, dtype=np.int64), minlength=n_bins + 1)[1:]
    p = counts / counts.sum()
    f["mode"] = float(np.argmax(counts) + 1)
    nz = p[p > 0]
    f["entropy"] = float(-(nz * np.log2(nz)).sum())
    f["uniformity"] = float((p ** 2).sum())
    return f, flags


def _sphere_mean_at(image: np.ndarray, centre, offs: np.ndarray) -> float:
    pts = offs + np.asarray(centre)
    ok = np.all((pts >= 0) & (pts < image.shape), axis=1)
    pts = pts[ok]
    return float(image[tuple(pts.T)].mean())


def local_intensity_peak(image: np.ndarray, roi: np.ndarray, spacing, radius_mm: float = PEAK_RADIUS_MM) -> float:
    """Mean over a 1 cm^3 sphere centred on the hottest ROI voxel.

    Ties go to the lexicographically smallest voxel index.
    """
    idx = np.argwhere(roi)  # lexicographic order
    vals = image[roi]
    centre = idx[int(np.argmax(vals))]
    return _sphere_mean_at(image, centre, sphere_offsets(spacing, radius_mm))


def global_intensity_peak(image: np.ndarray, roi: np.ndarray, spacing, radius_mm: float = PEAK_RADIUS_MM) -> float:
    """Largest 1 cm^3 sphere mean over all ROI voxel centres."""
    return max_sphere_mean(image, roi, spacing, radius_mm)
