"""Solve an SDPA sparse (.dat-s) file with cvxpy and print the optimal value.

Reads the problem  min c'x  s.t.  sum_k x_k F_k - F_0 >= 0  (block diagonal),
and prints a JSON object {"status", "objective"} on stdout.
"""

import json
import sys

import cvxpy as cp
import numpy as np


def tokens(text):
    for line in text.splitlines():
        line = line.split("*")[0].split('"')[0].strip()
        if line:
            yield line


def read_sdpa(text):
    lines = tokens(text)
    m = int(next(lines).replace(",", " ").split()[0])
    nblocks = int(next(lines).replace(",", " ").split()[0])
    sizes = [int(s) for s in next(lines).replace(",", " ").replace("{", " ").replace("}", " ").split()][:nblocks]
    c = np.array([float(s) for s in next(lines).replace(",", " ").replace("{", " ").replace("}", " ").split()][:m])
    mats = [[np.zeros((abs(s), abs(s))) for s in sizes] for _ in range(m + 1)]
    for line in lines:
        k, b, i, j, v = line.split()[:5]
        k, b, i, j, v = int(k), int(b) - 1, int(i) - 1, int(j) - 1, float(v)
        mats[k][b][i, j] = v
        mats[k][b][j, i] = v
    return m, sizes, c, mats


def main():
    path = sys.argv[1]
    with open(path) as f:
        m, sizes, c, mats = read_sdpa(f.read())
    x = cp.Variable(m)
    cons = []
    for b, s in enumerate(sizes):
        expr = -mats[0][b]
        for k in range(m):
            if np.any(mats[k + 1][b]):
                expr = expr + x[k] * mats[k + 1][b]
        if s < 0:
            cons.append(cp.diag(expr) >= 0)
        else:
            cons.append((expr + expr.T) / 2 >> 0)
    prob = cp.Problem(cp.Minimize(c @ x), cons)
    prob.solve(solver=cp.CLARABEL)
    print(json.dumps({"status": prob.status, "objective": prob.value}))


if __name__ == "__main__":
    main()
