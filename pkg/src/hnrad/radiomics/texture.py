"""Texture matrices and their features on a discretized ROI.

All matrices use 26-connectivity in 3D. GLCM and GLRLM features are computed
per direction (13 unique offsets) and averaged over the directions that have
at least one pair/run.
"""

from __future__ import annotations

import itertools
import warnings

import numpy as np
from scipy import ndimage as ndi

from ..errors import DegenerateValueWarning, FeatureUndefinedError
from .discretize import DiscretizedROI

COARSENESS_CAP = 1e6

OFFSETS_26 = [d for d in itertools.product((-1, 0, 1), repeat=3) if d != (0, 0, 0)]
# one representative of each +/- pair: first non-zero component positive
DIRECTIONS_13 = [d for d in OFFSETS_26 if next(c for c in d if c != 0) > 0]

_STRUCT26 = np.ones((3, 3, 3), dtype=bool)


def _shifted(arr: np.ndarray, d) -> np.ndarray:
    """View of the 1-padded ``arr`` core shifted by offset ``d`` (|d_k| <= 1)."""
    return arr[tuple(slice(1 + o, arr.shape[k] - 1 + o) for k, o in enumerate(d))]


def _core(arr: np.ndarray) -> np.ndarray:
    return arr[1:-1, 1:-1, 1:-1]


def _entropy(p: np.ndarray) -> float:
    p = p[p > 0]
    return float(-(p * np.log2(p)).sum())


# ---------------------------------------------------------------------------
# GLCM


def glcm_matrices(disc: DiscretizedROI) -> dict[tuple, np.ndarray]:
    """Symmetric co-occurrence counts per direction (directions without pairs omitted)."""
    lv, ng = disc.levels, disc.n_bins
    a = _core(lv)
    out = {}
    for d in DIRECTIONS_13:
        b = _shifted(lv, d)
        both = (a > 0) & (b > 0)
        if not both.any():
            continue
        code = (a[both] - 1) * ng + (b[both] - 1)
        c = np.bincount(code, minlength=ng * ng).reshape(ng, ng).astype(float)
        out[d] = c + c.T
    return out


def glcm_single(P: np.ndarray) -> dict[str, float]:
    ng = P.shape[0]
    p = P / P.sum()
    i = np.arange(1, ng + 1, dtype=float)
    I, J = np.meshgrid(i, i, indexing="ij")
    px, py = p.sum(axis=1), p.sum(axis=0)
    mux, muy = (i * px).sum(), (i * py).sum()
    sx = np.sqrt(((i - mux) ** 2 * px).sum())
    sy = np.sqrt(((i - muy) ** 2 * py).sum())
    diff = np.abs(I - J).astype(int)
    pm = np.bincount(diff.ravel(), weights=p.ravel(), minlength=ng)
    ssum = (I + J).astype(int)
    pp = np.bincount(ssum.ravel(), weights=p.ravel(), minlength=2 * ng + 1)
    k_m = np.arange(ng, dtype=float)
    k_p = np.arange(2 * ng + 1, dtype=float)

    f = {}
    f["jmax"] = float(p.max())
    f["javg"] = float((I * p).sum())
    f["jvar"] = float(((I - f["javg"]) ** 2 * p).sum())
    f["jent"] = _entropy(p)
    f["davg"] = float((k_m * pm).sum())
    f["dvar"] = float(((k_m - f["davg"]) ** 2 * pm).sum())
    f["dent"] = _entropy(pm)
    f["savg"] = float((k_p * pp).sum())
    f["svar"] = float(((k_p - f["savg"]) ** 2 * pp).sum())
    f["sent"] = _entropy(pp)
    f["energy"] = float((p ** 2).sum())
    f["contrast"] = float(((I - J) ** 2 * p).sum())
    f["dissimilarity"] = float((np.abs(I - J) * p).sum())
    f["invdiff"] = float((p / (1 + np.abs(I - J))).sum())
    f["invdiffnorm"] = float((p / (1 + np.abs(I - J) / ng)).sum())
    f["idm"] = float((p / (1 + (I - J) ** 2)).sum())
    f["idmn"] = float((p / (1 + ((I - J) / ng) ** 2)).sum())
    f["invvar"] = float((pm[1:] / k_m[1:] ** 2).sum())
    if sx * sy > 0:
        f["correlation1"] = float(((I * J * p).sum() - mux * muy) / (sx * sy))
    else:
        f["correlation1"] = 1.0
    f["autocorrelation"] = float((I * J * p).sum())
    dev = I + J - mux - muy
    f["clust_tend"] = float((dev ** 2 * p).sum())
    f["clust_shade"] = float((dev ** 3 * p).sum())
    f["clust_prom"] = float((dev ** 4 * p).sum())
    hx, hy = _entropy(px), _entropy(py)
    hxy = f["jent"]
    outer = np.outer(px, py)
    nz = p > 0
    hxy1 = float(-(p[nz] * np.log2(outer[nz])).sum())
    onz = outer > 0
    hxy2 = float(-(outer[onz] * np.log2(outer[onz])).sum())
    hmax = max(hx, hy)
    f["imc1"] = (hxy - hxy1) / hmax if hmax > 0 else 0.0
    f["imc2"] = float(np.sqrt(max(0.0, 1 - np.exp(-2 * (hxy2 - hxy)))))
    return f


GLCM_FEATURES = list(glcm_single(np.eye(2)).keys())


def _average(per_dir: list[dict[str, float]]) -> dict[str, float]:
    keys = per_dir[0].keys()
    return {k: float(np.mean([d[k] for d in per_dir])) for k in keys}


def glcm_features(disc: DiscretizedROI) -> tuple[dict[str, float], list[str]]:
    mats = glcm_matrices(disc)
    if not mats:
        raise FeatureUndefinedError("no co-occurring voxel pairs in any direction")
    flags = []
    per_dir = [glcm_single(P) for P in mats.values()]
    feats = _average(per_dir)
    if len(np.unique(disc.levels[disc.roi])) == 1:
        flags.append("GLCM-correlation1:constant_roi")
    return feats, flags


# ---------------------------------------------------------------------------
# Size-zone style matrices (GLRLM, GLSZM, GLDZM, NGLDM share one feature set)


def zone_features(M: np.ndarray, n_voxels: int) -> dict[str, float]:
    """Generic features of a grey-level x size matrix whose columns are sizes 1..K."""
    ng, nk = M.shape
    total = M.sum()
    i = np.arange(1, ng + 1, dtype=float)[:, None]
    j = np.arange(1, nk + 1, dtype=float)[None, :]
    p = M / total
    row = M.sum(axis=1)
    col = M.sum(axis=0)
    mu_i = (i * p).sum()
    mu_j = (j * p).sum()
    return {
        "se": float((M / j ** 2).sum() / total),
        "le": float((M * j ** 2).sum() / total),
        "lge": float((M / i ** 2).sum() / total),
        "hge": float((M * i ** 2).sum() / total),
        "slge": float((M / (i ** 2 * j ** 2)).sum() / total),
        "shge": float((M * i ** 2 / j ** 2).sum() / total),
        "llge": float((M * j ** 2 / i ** 2).sum() / total),
        "lhge": float((M * i ** 2 * j ** 2).sum() / total),
        "glnu": float((row ** 2).sum() / total),
        "glnun": float((row ** 2).sum() / total ** 2),
        "nu": float((col ** 2).sum() / total),
        "nun": float((col ** 2).sum() / total ** 2),
        "perc": float(total / n_voxels),
        "glvar": float(((i - mu_i) ** 2 * p).sum()),
        "var": float(((j - mu_j) ** 2 * p).sum()),
        "ent": _entropy(p.ravel()),
        "energy": float((p ** 2).sum()),
    }


_NAMES = {
    "GLRLM": {"se": "sre", "le": "lre", "lge": "lgre", "hge": "hgre", "slge": "srlge",
              "shge": "srhge", "llge": "lrlge", "lhge": "lrhge", "glnu": "glnu",
              "glnun": "glnun", "nu": "rlnu", "nun": "rlnun", "perc": "rp",
              "glvar": "glvar", "var": "rlvar", "ent": "rlent"},
    "GLSZM": {"se": "sze", "le": "lze", "lge": "lgze", "hge": "hgze", "slge": "szlge",
              "shge": "szhge", "llge": "lzlge", "lhge": "lzhge", "glnu": "glnu",
              "glnun": "glnun", "nu": "zsnu", "nun": "zsnun", "perc": "zp",
              "glvar": "glvar", "var": "zsvar", "ent": "zsent"},
    "GLDZM": {"se": "sde", "le": "lde", "lge": "lgze", "hge": "hgze", "slge": "sdlge",
              "shge": "sdhge", "llge": "ldlge", "lhge": "ldhge", "glnu": "glnu",
              "glnun": "glnun", "nu": "zdnu", "nun": "zdnun", "perc": "zp",
              "glvar": "glvar", "var": "zdvar", "ent": "zdent"},
    "NGLDM": {"se": "lde", "le": "hde", "lge": "lgce", "hge": "hgce", "slge": "ldlge",
              "shge": "ldhge", "llge": "hdlge", "lhge": "hdhge", "glnu": "glnu",
              "glnun": "glnun", "nu": "dcnu", "nun": "dcnun", "glvar": "glvar",
              "var": "dcvar", "ent": "dcent", "energy": "dcenergy"},
}

FAMILY_FEATURES = {fam: list(m.values()) for fam, m in _NAMES.items()}


def _rename(family: str, generic: dict[str, float]) -> dict[str, float]:
    return {name: generic[key] for key, name in _NAMES[family].items()}


def glrlm_matrices(disc: DiscretizedROI) -> dict[tuple, np.ndarray]:
    """Run-length matrix per direction, shape (n_bins, max_run)."""
    lv, ng = disc.levels, disc.n_bins
    shape = np.array(lv.shape)
    out = {}
    for d in DIRECTIONS_13:
        d = np.array(d)
        fwd = tuple(slice(max(0, -o), s - max(0, o)) for o, s in zip(d, shape))
        bwd = tuple(slice(max(0, o), s - max(0, -o)) for o, s in zip(d, shape))
        # cont[x] is True when voxel x continues the run of x - d
        cont = np.zeros(lv.shape, dtype=bool)
        cont[bwd] = (lv[bwd] > 0) & (lv[bwd] == lv[fwd])
        # position of each voxel within its run, grown one step per pass
        pos = (lv > 0).astype(np.int64)
        for _ in range(max(lv.shape)):
            prev = np.zeros(lv.shape, dtype=np.int64)
            prev[bwd] = pos[fwd]
            new = np.where(cont, prev + 1, pos)
            if np.array_equal(new, pos):
                break
            pos = new
        # a voxel ends a run when the next voxel does not continue it
        ends = (lv > 0).copy()
        ends[fwd] &= ~cont[bwd]
        levels = lv[ends]
        lengths = pos[ends]
        M = np.zeros((ng, int(lengths.max())))
        np.add.at(M, (levels - 1, lengths - 1), 1)
        out[tuple(d)] = M
    return out


def glrlm_features(disc: DiscretizedROI) -> dict[str, float]:
    n = disc.n_voxels
    per_dir = [zone_features(M, n) for M in glrlm_matrices(disc).values()]
    return _rename("GLRLM", _average(per_dir))


def zones(disc: DiscretizedROI) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """26-connected iso-level zones as (zone label array, level per zone, size per zone)."""
    lv = disc.levels
    zone_map = np.zeros(lv.shape, dtype=np.int64)
    levels, sizes = [], []
    next_id = 0
    for g in np.unique(lv[lv > 0]):
        lab, n = ndi.label(lv == g, structure=_STRUCT26)
        zone_map[lab > 0] = lab[lab > 0] + next_id
        levels.extend([int(g)] * n)
        sizes.extend(np.bincount(lab.ravel())[1:].tolist())
        next_id += n
    return zone_map, np.array(levels, dtype=np.int64), np.array(sizes, dtype=np.int64)


def glszm_matrix(disc: DiscretizedROI) -> np.ndarray:
    _, levels, sizes = zones(disc)
    M = np.zeros((disc.n_bins, int(sizes.max())))
    np.add.at(M, (levels - 1, sizes - 1), 1)
    return M


def glszm_features(disc: DiscretizedROI) -> dict[str, float]:
    return _rename("GLSZM", zone_features(glszm_matrix(disc), disc.n_voxels))


def border_distance(disc: DiscretizedROI) -> np.ndarray:
    """Chebyshev distance (voxels) from each ROI voxel to the nearest non-ROI voxel."""
    return ndi.distance_transform_cdt(disc.roi, metric="chessboard")


def gldzm_matrix(disc: DiscretizedROI) -> np.ndarray:
    zone_map, levels, _ = zones(disc)
    dist = border_distance(disc)
    zd = ndi.minimum(dist, labels=zone_map, index=np.arange(1, len(levels) + 1))
    zd = np.asarray(zd, dtype=np.int64)
    M = np.zeros((disc.n_bins, int(zd.max())))
    np.add.at(M, (levels - 1, zd - 1), 1)
    return M


def gldzm_features(disc: DiscretizedROI) -> dict[str, float]:
    return _rename("GLDZM", zone_features(gldzm_matrix(disc), disc.n_voxels))


def _neighbour_stats(lv: np.ndarray):
    roi = lv > 0
    kernel = np.ones((3, 3, 3))
    kernel[1, 1, 1] = 0
    total = ndi.correlate(lv.astype(float), kernel, mode="constant", cval=0.0)
    count = ndi.correlate(roi.astype(float), kernel, mode="constant", cval=0.0)
    return total, count


def ngtdm_table(disc: DiscretizedROI) -> tuple[np.ndarray, np.ndarray]:
    """Per-level voxel count n_i and absolute-difference sum s_i.

    Voxels without any ROI neighbour are excluded from both.
    """
    lv, ng = disc.levels, disc.n_bins
    total, count = _neighbour_stats(lv)
    valid = (lv > 0) & (count > 0)
    g = lv[valid]
    avg = total[valid] / count[valid]
    n = np.bincount(g - 1, minlength=ng).astype(float)
    s = np.bincount(g - 1, weights=np.abs(g - avg), minlength=ng)
    return n, s


def ngtdm_features(disc: DiscretizedROI) -> tuple[dict[str, float], list[str]]:
    n, s = ngtdm_table(disc)
    nv = n.sum()
    flags = []
    f = {}
    if nv == 0:
        flags.append("NGTDM:no_valid_neighbourhoods")
        return {"coarseness": COARSENESS_CAP, "contrast": 0.0, "busyness": 0.0,
                "complexity": 0.0, "strength": 0.0}, flags
    p = n / nv
    i = np.arange(1, len(n) + 1, dtype=float)
    present = p > 0
    ngp = int(present.sum())
    ps = (p * s).sum()
    if ps > 0:
        f["coarseness"] = float(min(COARSENESS_CAP, 1.0 / ps))
    else:
        f["coarseness"] = COARSENESS_CAP
        flags.append("NGTDM-coarseness:capped")
    ip, pp, sp = i[present], p[present], s[present]
    Ii, Ij = np.meshgrid(ip, ip, indexing="ij")
    Pi, Pj = np.meshgrid(pp, pp, indexing="ij")
    Si, Sj = np.meshgrid(sp, sp, indexing="ij")
    if ngp > 1:
        f["contrast"] = float((Pi * Pj * (Ii - Ij) ** 2).sum() / (ngp * (ngp - 1)) * s.sum() / nv)
    else:
        f["contrast"] = 0.0
    denom = np.abs(Ii * Pi - Ij * Pj).sum()
    f["busyness"] = float(ps / denom) if denom > 0 else 0.0
    f["complexity"] = float((np.abs(Ii - Ij) * (Pi * Si + Pj * Sj) / (Pi + Pj)).sum() / nv)
    f["strength"] = float(((Pi + Pj) * (Ii - Ij) ** 2).sum() / s.sum()) if s.sum() > 0 else 0.0
    return f, flags


NGTDM_FEATURES = ["coarseness", "contrast", "busyness", "complexity", "strength"]


def ngldm_matrix(disc: DiscretizedROI) -> np.ndarray:
    """Rows: grey level; column k: voxels with k same-level ROI neighbours (k = 0..26)."""
    lv, ng = disc.levels, disc.n_bins
    a = _core(lv)
    dep = np.zeros(a.shape, dtype=np.int64)
    for d in OFFSETS_26:
        b = _shifted(lv, d)
        dep += (b == a) & (a > 0)
    inside = a > 0
    M = np.zeros((ng, 27))
    np.add.at(M, (a[inside] - 1, dep[inside]), 1)
    return M


def ngldm_features(disc: DiscretizedROI) -> dict[str, float]:
    # column k holds dependence k, so the generic size index k + 1 counts the
    # centre voxel too, as the usual dependence-count definition does
    return _rename("NGLDM", zone_features(ngldm_matrix(disc), disc.n_voxels))


def texture_features(disc: DiscretizedROI) -> tuple[dict[str, dict[str, float]], list[str]]:
    """All texture families keyed by family name, plus degenerate-value flags."""
    flags: list[str] = []
    out: dict[str, dict[str, float]] = {}
    try:
        out["GLCM"], fl = glcm_features(disc)
        flags += fl
    except FeatureUndefinedError:
        out["GLCM"] = {k: (1.0 if k == "correlation1" else 0.0) for k in GLCM_FEATURES}
        flags.append("GLCM:no_pairs")
        warnings.warn("GLCM undefined for a single-voxel ROI; zeros substituted",
                      DegenerateValueWarning, stacklevel=2)
    out["GLRLM"] = glrlm_features(disc)
    out["GLSZM"] = glszm_features(disc)
    out["GLDZM"] = gldzm_features(disc)
    out["NGTDM"], fl = ngtdm_features(disc)
    flags += fl
    out["NGLDM"] = ngldm_features(disc)
    return out, flags
