"""
Looking at predicted filters
============================

Trains a small ``dtf`` model, renders a probe clip and compares the filters
predicted at the blob with those in the background.
"""

import tempfile
from pathlib import Path

import numpy as np

from dtfnet.export import blob_center, export_filters
from dtfnet.training import RunConfig, train

out = Path(tempfile.mkdtemp())
cfg = RunConfig(channels=(4, 8), blocks=(1, 1), variant_stages=(0,), G=16, T=32, H=6, W=6,
                cycles=(1, 2, 3, 4), sigma=0.3, train_per_class=100, val_per_class=25, epochs=10, base_lr=0.04,
                out_dir=str(out / "run"))
result = train(cfg)
print("val top-1:", result.val_top1)

###############################################################################
# Render the probe at 16 x 16 so that the background is far from the blob.

probe = export_filters(result.checkpoint, probe_seed=7, locations=[(0, 0)], probe_size=(16, 16))
cy, cx = blob_center(probe.clip)
locs = [(cy, cx), (2, 2), (13, 13)]
exp = export_filters(result.checkpoint, probe_seed=7, locations=locs, probe_size=(16, 16),
                     out_dir=out / "filters")

###############################################################################
# Background filters look alike; the blob gets its own.

print("blob at", (cy, cx))
print("blob vs corner  :", exp.distance(locs[0], locs[1]))
print("corner vs corner:", exp.distance(locs[1], locs[2]))
np.set_printoptions(precision=3, suppress=True)
print("kernel at blob, channel 0:", exp.kernels[locs[0]][0])
print("csv files:", sorted(p.name for p in exp.paths.values()))
