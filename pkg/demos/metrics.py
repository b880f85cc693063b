"""
Region and boundary accuracy
============================

J is intersection over union.  F matches boundary pixels of the prediction
and the ground truth within a small distance tolerance and reports the
F-measure of that matching.
"""

import numpy as np

from memvos.metrics import boundary, boundary_f, default_tolerance, jaccard, jf_score

a = np.zeros((16, 16), bool)
b = np.zeros((16, 16), bool)
a[0:8, 0:8] = True
b[4:12, 0:8] = True
print("J of two 8x8 squares sharing half their rows:", jaccard(a, b))

# %%
# A one-pixel shift hurts J a little but F only when the tolerance is zero.
sq = np.zeros((32, 32), bool)
sq[8:24, 8:24] = True
moved = np.roll(sq, 1, axis=1)
print("J:", round(jaccard(sq, moved), 4))
for tol in (0, 1):
    print(f"F with tolerance {tol}:", boundary_f(sq, moved, tol))
print("default tolerance for 480x854:", default_tolerance((480, 854)))

# %%
# The boundary is every foreground pixel with a background 4-neighbour.
ring = boundary(np.pad(np.ones((4, 6), bool), 1))
print("\n".join("".join("#" if v else "." for v in row) for row in ring))

# %%
# Scores are summarised on a 0-100 scale.
print(jf_score([0.9, 0.7, 1.0], [0.8, 0.6, 1.0]))
