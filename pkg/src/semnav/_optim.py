"""Small optimizer helpers shared by the codec and policy trainers."""
from __future__ import annotations

import numpy as np

ADAM_B1 = 0.9
ADAM_B2 = 0.999
ADAM_EPS = 1e-8


def adam_step(p, g, m, v, t, lr, b1=ADAM_B1, b2=ADAM_B2, eps=ADAM_EPS):
    """In-place Adam update of ``p`` (the tables can be large, so avoid temporaries)."""
    m *= b1
    m += (1 - b1) * g
    g2 = g * g
    g2 *= 1 - b2
    v *= b2
    v += g2
    denom = np.sqrt(v / (1 - b2**t), out=g2)
    denom += eps
    step = np.divide(m, denom, out=denom)
    step *= lr / (1 - b1**t)
    p -= step
