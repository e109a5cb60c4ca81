"""Step-size checkpoints for a 100-iteration Auto-PGD run, in exact rationals.

p_0 = 0, p_1 = 0.22, p_{j+1} = p_j + max(p_j - p_{j-1} - 0.03, 0.06),
w_j = ceil(p_j * N), kept while p_j <= 1.
"""
import math
from fractions import Fraction as F

def checkpoints(n):
    p = [F(0), F(22, 100)]
    while True:
        nxt = p[-1] + max(p[-1] - p[-2] - F(3, 100), F(6, 100))
        if nxt > 1:
            break
        p.append(nxt)
    return [math.ceil(v * n) for v in p]

for n in (100, 10, 2):
    print(n, checkpoints(n))
