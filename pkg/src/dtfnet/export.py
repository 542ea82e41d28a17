"""Dump the dynamic filters a trained ``dtf`` model predicts for a probe clip."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import generate_clip
from .dtf import export_equivalent_kernel, write_filter_csv
from .errors import OutOfRange, VariantMismatch
from .fft import ComplexSeq
from .model import dynamic_filter_maps
from .training import load_run


@dataclass
class FilterExport:
    clip: np.ndarray  # C_in x T x H x W probe clip
    block: int
    filters: dict[tuple[int, int], ComplexSeq] = field(default_factory=dict)
    kernels: dict[tuple[int, int], np.ndarray] = field(default_factory=dict)
    paths: dict[tuple[int, int], Path] = field(default_factory=dict)

    def distance(self, a: tuple[int, int], b: tuple[int, int]) -> float:
        """L2 distance between the complex filters at two exported locations."""
        fa, fb = self.filters[a], self.filters[b]
        return float(np.sqrt(np.sum((fa.re - fb.re) ** 2 + (fa.im - fb.im) ** 2)))


def blob_center(clip: np.ndarray) -> tuple[int, int]:
    """Pixel with the largest temporal standard deviation (summed over input channels)."""
    energy = clip.std(axis=1).sum(axis=0)
    y, x = np.unravel_index(int(np.argmax(energy)), energy.shape)
    return int(y), int(x)


def export_filters(checkpoint, probe_seed: int, locations=None, out_dir=None, probe_class: int = 0,
                   probe_size: tuple[int, int] | None = None, block: int | None = None) -> FilterExport:
    """Run one probe clip through a ``dtf`` model and collect per-location filters.

    ``locations`` are ``(y, x)`` pairs at the first ``dtf`` block's
    resolution; by default the blob centre and two opposite corners one pixel
    in from the border. ``probe_size`` renders the probe at another frame
    size (the network is fully convolutional). With ``out_dir`` one CSV per
    location is written in the filter dump format.
    """
    params, cfg = load_run(checkpoint)
    mcfg = cfg.model_config()
    if "dtf" not in {v for _, _, v in mcfg.block_variants()}:
        raise VariantMismatch(f"variant {cfg.variant!r} has no dynamic filters to export")
    H, W = probe_size or (cfg.H, cfg.W)
    clip, _ = generate_clip(cfg.clip_spec(H=H, W=W), probe_class, probe_seed)
    maps = dynamic_filter_maps(params, clip[None], mcfg)
    blk = min(maps) if block is None else block
    if blk not in maps:
        raise VariantMismatch(f"block {blk} is not a dtf block")
    fmap = maps[blk][0]  # H' x W' x C x M x 2
    Hb, Wb = fmap.shape[:2]
    if locations is None:
        cy, cx = blob_center(clip)
        scale_y, scale_x = H / Hb, W / Wb
        locations = [
            (min(int(cy / scale_y), Hb - 1), min(int(cx / scale_x), Wb - 1)),
            (min(1, Hb - 1), min(1, Wb - 1)),
            (max(Hb - 2, 0), max(Wb - 2, 0)),
        ]
    out = FilterExport(clip=clip, block=blk)
    for y, x in locations:
        if not (0 <= y < Hb and 0 <= x < Wb):
            raise OutOfRange(f"location {(y, x)} outside the {Hb} x {Wb} filter map")
        S = ComplexSeq(fmap[y, x, ..., 0], fmap[y, x, ..., 1])
        out.filters[(y, x)] = S
        out.kernels[(y, x)] = export_equivalent_kernel(S, cfg.T)
        if out_dir is not None:
            d = Path(out_dir)
            d.mkdir(parents=True, exist_ok=True)
            out.paths[(y, x)] = write_filter_csv(d / f"filters_b{blk}_y{y}_x{x}.csv", S, cfg.T)
    return out
