"""
Frame aggregation
=================

Each location looks at a k x k window in the next frame, weighs the
neighbours by feature similarity and adds the weighted sum to its own
feature. The weights show where the content went.
"""

import numpy as np

from dtfnet.fa import frame_aggregate, window_offsets

###############################################################################
# A bright pixel moving one step right per frame, on 2 channels, on a
# weak constant background.

T, H, W = 4, 5, 7
F = np.full((1, 2, T, H, W), 0.1)
for t in range(T):
    F[0, :, t, 2, 1 + t] = 3.0

###############################################################################
# ``frame_aggregate`` returns the enhanced features and the k*k attention
# weights. At the pixel, the heaviest weight points one step right.

enh, weights = frame_aggregate(F, 3)
offsets = window_offsets(3)
for t in range(T - 1):
    w = weights[0, :, t, 2, 1 + t]
    print(f"frame {t}: strongest offset {offsets[int(np.argmax(w))]}, weight {w.max():.3f}")

###############################################################################
# Weights sum to one over the in-bounds window, and the last frame has no
# successor, so its features pass through unchanged.

print("sum of weights:", weights[0].sum(axis=0).min(), weights[0].sum(axis=0).max())
print("last frame unchanged:", np.array_equal(enh[0, :, -1], F[0, :, -1]))
