"""
Reading pixel memory with top-k attention
=========================================

A memory bank stores keys and per-object values for past frames.  A query
frame reads it by scoring every query position against every stored
position and averaging the values of the ``top_k`` best matches.
"""

import numpy as np

from memvos.pixel_memory import MemoryBank, MemoryConfig, MemoryFrame, attention_matrix, attend

rng = np.random.default_rng(0)

# three memory frames of 6 positions each, 4-dim keys, 2-dim values for object 1
bank = MemoryBank()
for t in range(3):
    keys = rng.standard_normal((6, 4)).astype(np.float32)
    values = rng.standard_normal((6, 2)).astype(np.float32)
    bank.add(MemoryFrame(t, keys, {1: values}), permanent=t == 0)
print("frames in memory:", bank.frame_indices)

# %%
# Each query row keeps exactly ``top_k`` weights, and they sum to one.
query = rng.standard_normal((2, 4)).astype(np.float32)
weights = attention_matrix(query, bank.keys(), top_k=3)
np.set_printoptions(precision=3, suppress=True)
print(weights)
print("nonzeros per row:", (weights > 0).sum(1), "row sums:", weights.sum(1))

# %%
# The readout is the weighted average of the kept values.
print("attended values:\n", attend(query, bank.keys(), bank.values(1), top_k=3))

# %%
# Eviction keeps frame 0 and drops the oldest regular frames once there are
# more than ``max_mem_frames`` of them.
cfg = MemoryConfig(max_mem_frames=3, min_mem_frames=2, top_k=3)
for t in range(3, 8):
    bank.add(MemoryFrame(t, rng.standard_normal((6, 4)).astype(np.float32),
                         {1: np.zeros((6, 2), np.float32)}))
    dropped = bank.evict(cfg)
    print(f"after frame {t}: {bank.frame_indices}" + (f"  (dropped {dropped})" if dropped else ""))
