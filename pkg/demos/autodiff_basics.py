"""
Reverse-mode autodiff on a tape
===============================

Build a small expression, run it under a tape, and compare the gradients
against central differences.
"""

import numpy as np

from injtype import autodiff as ad
from injtype.autodiff import Tensor

rng = np.random.default_rng(0)
x = Tensor(rng.normal(size=(1, 4)), requires_grad=True)
W = Tensor(rng.normal(size=(4, 3)), requires_grad=True)

# every op applied inside the tape is recorded in order
with ad.Tape() as tape:
    h = ad.tanh(ad.matmul(x, W))
    p = ad.softmax(ad.getitem(h, 0))
    loss = ad.cross_entropy(p, 2)
print("ops recorded:", len(tape.nodes))
print("loss:", loss.item())

ad.backward(loss, tape)
print("dL/dW:\n", W.grad)


def f():
    h = ad.tanh(ad.matmul(x, W))
    return ad.cross_entropy(ad.softmax(ad.getitem(h, 0)), 2)


# the same check, automated
errors = ad.check_gradients(f, {"x": x, "W": W})
for name, err in errors.items():
    print(f"{name}: relative error {err:.2e}")

# inside no_grad nothing is recorded, even within a tape
with ad.Tape() as tape, ad.no_grad():
    ad.tanh(x)
print("ops recorded under no_grad:", len(tape))
