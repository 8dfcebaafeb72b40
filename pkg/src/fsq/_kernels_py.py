"""Pure numpy/Python versions of the compiled kernels in ``_kernels.pyx``."""

import numpy as np


def forward(x, W1, b1, W2, b2):
    hidden = x @ W1
    hidden += b1
    np.maximum(hidden, 0.0, out=hidden)
    out = hidden @ W2
    out += b2
    return hidden, out


def backward(x, hidden, W2, dout):
    gW2 = hidden.T @ dout
    gb2 = dout.sum(axis=0)
    dh = dout @ W2.T
    dh *= hidden > 0.0
    gW1 = x.T @ dh
    gb1 = dh.sum(axis=0)
    return gW1, gb1, gW2, gb2


def loss_grad(x, W1, b1, W2, b2, target, mask, weights, gW1, gb1, gW2, gb2):
    hidden, pred = forward(x, W1, b1, W2, b2)
    resid = np.where(mask, pred - target, 0.0)
    B = x.shape[0]
    loss = float(np.dot(weights, np.einsum("ij,ij->i", resid, resid))) / B
    dout = resid * (2.0 * weights / B)[:, None]
    gW1[...], gb1[...], gW2[...], gb2[...] = backward(x, hidden, W2, dout)
    return loss, pred


def adam_update(param, grad, m, v, lr, beta1, beta2, eps, step):
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * grad * grad
    mhat = m / (1.0 - beta1**step)
    vhat = v / (1.0 - beta2**step)
    param -= lr * mhat / (np.sqrt(vhat) + eps)


def sumtree_update(tree, leaf, value):
    cap = tree.shape[0] // 2
    node = cap + leaf
    tree[node] = value
    node >>= 1
    while node >= 1:
        tree[node] = tree[2 * node] + tree[2 * node + 1]
        node >>= 1


def sumtree_find(tree, u, size):
    cap = tree.shape[0] // 2
    out = np.empty(len(u), dtype=np.int64)
    for s, mass in enumerate(u):
        node = 1
        while node < cap:
            left = tree[2 * node]
            if mass < left or tree[2 * node + 1] <= 0.0:
                node = 2 * node
            else:
                mass -= left
                node = 2 * node + 1
        leaf = node - cap
        while leaf > 0 and (leaf >= size or tree[cap + leaf] <= 0.0):
            leaf -= 1
        out[s] = leaf
    return out
