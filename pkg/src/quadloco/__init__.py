"""quadloco: a desk-scale, fully inspectable quadruped locomotion stack.

A planar rigid-body simulation, a from-scratch dense-network engine, a
multiplicative-composition Gaussian policy, and the three training stages
(imitation -> adversarial control adapter -> RL fine-tuning) that together
produce an agent steerable by live speed/heading commands.
"""

import os as _os

# Keep BLAS single-threaded: the matrices here are small, and reproducible
# reductions matter more than parallel matmul.
for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    _os.environ.setdefault(_var, "1")

__version__ = "0.1.0"
