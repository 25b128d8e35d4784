"""Artifact writers: delimited grids, PGM heatmaps, matplotlib figures.

Every writer is deterministic for fixed input so runs are reproducible
file-for-file.  PGM output is diagnostic 8-bit; figures are rendered to
PNG next to the delimited data.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def write_csv_grid(path, values: np.ndarray, lengths, N: int | None = None) -> Path:
    """One `x,y(,z),value` row per node, x varying fastest.

    Header: `# d N M lengths...` (space separated after the marker).
    """
    path = Path(path)
    values = np.asarray(values)
    d = values.ndim
    M = values.shape[0]
    axes = [np.arange(M) * (lengths[a] / M) for a in range(d)]
    mesh = np.meshgrid(*axes, indexing="ij")
    header = f"# {d} {N if N is not None else M} {M} " + " ".join(
        repr(float(L)) for L in lengths
    )
    cols = [m.ravel(order="F") for m in mesh] + [values.ravel(order="F")]
    lines = [header]
    for row in zip(*cols):
        lines.append(",".join(repr(float(x)) for x in row))
    path.write_text("\n".join(lines) + "\n")
    return path


def read_csv_grid(path) -> tuple[np.ndarray, tuple[float, ...]]:
    """Inverse of write_csv_grid; returns (values, lengths)."""
    lines = Path(path).read_text().strip().splitlines()
    parts = lines[0].lstrip("# ").split()
    d, _, M = int(parts[0]), int(parts[1]), int(parts[2])
    lengths = tuple(float(x) for x in parts[3 : 3 + d])
    vals = np.array([float(line.split(",")[-1]) for line in lines[1:]])
    return vals.reshape((M,) * d, order="F"), lengths


def write_pgm(path, values: np.ndarray, symmetric: bool = True) -> Path:
    """8-bit binary PGM of a 2D field.

    Symmetric scaling maps 0 to mid-gray with range +-max|values|, so sign
    structure is readable; masks (0/1) can be written with symmetric=False.
    """
    path = Path(path)
    values = np.asarray(values, dtype=float)
    if values.ndim != 2:
        raise ValueError("PGM output is 2D only")
    if symmetric:
        scale = np.abs(values).max()
        scaled = 127.5 + (127.5 * values / scale if scale > 0 else 0.0 * values)
    else:
        vmax = values.max()
        scaled = 255.0 * values / vmax if vmax > 0 else 0.0 * values
    pixels = np.clip(np.rint(scaled), 0, 255).astype(np.uint8)
    # image row 0 at the top: flip the second axis, transpose x to columns
    img = pixels.T[::-1]
    header = f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode()
    path.write_bytes(header + img.tobytes())
    return path


def _mid_slices(values: np.ndarray) -> list[tuple[str, np.ndarray]]:
    m = values.shape[0] // 2
    return [
        ("x-slice", values[m, :, :]),
        ("y-slice", values[:, m, :]),
        ("z-slice", values[:, :, m]),
    ]


def write_field_pgms(stem: Path, values: np.ndarray) -> list[Path]:
    """PGM heatmap(s) for a field: one file in 2D, mid-slices in 3D."""
    out = []
    if values.ndim == 2:
        out.append(write_pgm(stem.with_suffix(".pgm"), values))
    else:
        for name, sl in _mid_slices(values):
            out.append(write_pgm(stem.parent / f"{stem.name}_{name}.pgm", sl))
    return out


def save_heatmap_png(path, values: np.ndarray, lengths, title: str = "") -> Path:
    """Matplotlib rendering of a scalar field (2D image or 3D mid-slices)."""
    path = Path(path)
    values = np.asarray(values, dtype=float)
    vmax = np.abs(values).max() or 1.0
    if values.ndim == 2:
        fig, ax = plt.subplots(figsize=(4.2, 3.6))
        im = ax.imshow(
            values.T,
            origin="lower",
            extent=(0, lengths[0], 0, lengths[1]),
            cmap="RdBu_r",
            vmin=-vmax,
            vmax=vmax,
        )
        fig.colorbar(im, ax=ax, shrink=0.85)
        ax.set_xlabel("x")
        ax.set_ylabel("y")
        if title:
            ax.set_title(title)
    elif values.ndim == 3:
        fig, axes = plt.subplots(1, 3, figsize=(10.5, 3.2))
        for ax, (name, sl) in zip(axes, _mid_slices(values)):
            im = ax.imshow(sl.T, origin="lower", cmap="RdBu_r", vmin=-vmax, vmax=vmax)
            ax.set_title(name, fontsize=9)
        fig.colorbar(im, ax=axes, shrink=0.8)
        if title:
            fig.suptitle(title)
    else:
        raise ValueError("heatmaps support 2D and 3D fields")
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path


def save_sigma_png(path, sigma: np.ndarray, title: str = "singular values") -> Path:
    path = Path(path)
    fig, ax = plt.subplots(figsize=(4.0, 3.0))
    idx = np.arange(1, len(sigma) + 1)
    ax.plot(idx, sigma, "o-", ms=5)
    ax.set_xticks(idx)
    ax.set_xlabel("index")
    ax.set_ylabel("sigma")
    ax.set_ylim(0, 1.05 * max(1.0, float(np.max(sigma))))
    ax.grid(alpha=0.3)
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path


def save_mask_png(path, mask: np.ndarray, lengths, title: str = "") -> Path:
    path = Path(path)
    mask = np.asarray(mask)
    if mask.ndim == 2:
        fig, ax = plt.subplots(figsize=(4.0, 3.6))
        ax.imshow(
            mask.T.astype(float),
            origin="lower",
            extent=(0, lengths[0], 0, lengths[1]),
            cmap="Greys",
            vmin=0,
            vmax=1,
        )
        ax.set_xlabel("x")
        ax.set_ylabel("y")
        if title:
            ax.set_title(title)
    else:
        fig, axes = plt.subplots(1, 3, figsize=(10.0, 3.2))
        for ax, (name, sl) in zip(axes, _mid_slices(mask.astype(float))):
            ax.imshow(sl.T, origin="lower", cmap="Greys", vmin=0, vmax=1)
            ax.set_title(name, fontsize=9)
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path


def save_enstrophy_png(path, times: np.ndarray, values: np.ndarray) -> Path:
    path = Path(path)
    fig, ax = plt.subplots(figsize=(4.2, 3.0))
    ax.plot(times, values)
    ax.set_xlabel("t")
    ax.set_ylabel("enstrophy")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path
