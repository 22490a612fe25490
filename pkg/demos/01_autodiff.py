"""
Reverse-mode gradients on numpy arrays
======================================

Build a small expression, call ``backward`` and compare against central
finite differences.
"""

import numpy as np

from mentor import autodiff as ad

rng = np.random.default_rng(0)

# Tensors wrap arrays. float64 input stays float64, which is what we want for
# finite-difference comparisons; lists and ints default to float32.
x = ad.Tensor(rng.normal(size=(2, 1, 6, 6)), requires_grad=True)
k = ad.Tensor(rng.normal(size=(3, 1, 3, 3)), requires_grad=True)

# conv -> relu -> 2x2 max pool -> global average -> scalar
y = ad.relu(ad.conv2d(x, k, padding=1))
loss = ad.mean(ad.global_avg_pool(ad.maxpool2x(y)) ** 2)
loss.backward()
print("loss", loss.item())
print("dL/dk shape", k.grad.shape)


# %%
# Finite-difference check of one kernel entry

def value(kernel):
    with ad.no_grad():
        out = ad.relu(ad.conv2d(ad.Tensor(x.data), ad.Tensor(kernel), padding=1))
        return ad.mean(ad.global_avg_pool(ad.maxpool2x(out)) ** 2).item()


eps = 1e-3
bumped = k.data.copy()
bumped[1, 0, 2, 0] += eps
lowered = k.data.copy()
lowered[1, 0, 2, 0] -= eps
numeric = (value(bumped) - value(lowered)) / (2 * eps)
print(f"analytic {k.grad[1, 0, 2, 0]:.8f}  numeric {numeric:.8f}")


# %%
# Gradients accumulate across uses of the same tensor

a = ad.Tensor(np.array([2.0, -1.0]), requires_grad=True)
ad.tsum(a * a + a * 3.0).backward()
print("d/da (a^2 + 3a) =", a.grad, "expected", 2 * a.data + 3)
