"""Closed-form cross-entropy loss and input gradient for the seed-7 linear toy.

Model: 3 classes, input shape (1, 2, 2) so d = 4. Weights W (3x4, row-major)
then bias b (3) drawn from SplitMix64(7). Input drawn from SplitMix64(1007)
uniformly in [0.1, 0.9]. Target class 1.

    z = W x + b,  L = log(sum_k exp(z_k)) - z_y,  dL/dx = W^T (softmax(z) - e_y)
"""
import math
from splitmix import SplitMix64, toy_weights

K, D, Y = 3, 4, 1
rng = SplitMix64(7)
W = toy_weights(rng, K * D)
b = toy_weights(rng, K)
xr = SplitMix64(1007)
x = [xr.uniform(0.1, 0.9) for _ in range(D)]

z = [sum(W[k * D + j] * x[j] for j in range(D)) + b[k] for k in range(K)]
m = max(z)
lse = m + math.log(sum(math.exp(v - m) for v in z))
loss = lse - z[Y]
p = [math.exp(v - lse) for v in z]
r = [p[k] - (1.0 if k == Y else 0.0) for k in range(K)]
grad = [sum(W[k * D + j] * r[k] for k in range(K)) for j in range(D)]

print("x =", [repr(v) for v in x])
print("loss =", repr(loss))
print("grad =", [repr(v) for v in grad])
