"""Writes the tiny reference network, probe inputs and expected outputs.

The forward pass here is a plain numpy reading of the weights-file layer
conventions and serves as an independent oracle for the Rust engine.

    python3 gen_golden.py   # run from this directory
"""
import json
import struct

import numpy as np

KINDS = {"conv": 0, "dense": 1, "nlb": 2, "bn": 3}
rng = np.random.default_rng(20240611)


def tensor(name, kind, arr):
    return (name, KINDS[kind], np.asarray(arr, dtype=np.float32))


def layers():
    t = []
    t.append(tensor("block1.conv1.weight", "conv", rng.normal(0, 0.5, (3, 2, 4))))
    t.append(tensor("block1.conv1.bias", "conv", rng.normal(0, 0.1, 4)))
    t.append(tensor("block1.bn1.gamma", "bn", rng.uniform(0.5, 1.5, 4)))
    t.append(tensor("block1.bn1.beta", "bn", rng.normal(0, 0.1, 4)))
    t.append(tensor("block1.bn1.mean", "bn", rng.normal(0, 0.1, 4)))
    t.append(tensor("block1.bn1.var", "bn", rng.uniform(0.5, 2.0, 4)))
    t.append(tensor("block1.conv2.weight", "conv", rng.normal(0, 0.4, (3, 4, 4))))
    t.append(tensor("block1.conv2.bias", "conv", rng.normal(0, 0.1, 4)))
    for p in ("theta", "phi", "g"):
        t.append(tensor(f"block1.nlb.{p}_weight", "nlb", rng.normal(0, 0.5, (4, 2))))
        t.append(tensor(f"block1.nlb.{p}_bias", "nlb", rng.normal(0, 0.1, 2)))
    t.append(tensor("block1.nlb.out_weight", "nlb", rng.normal(0, 0.5, (2, 4))))
    t.append(tensor("block1.nlb.out_bias", "nlb", rng.normal(0, 0.1, 4)))
    t.append(tensor("block2.conv1.weight", "conv", rng.normal(0, 0.3, (5, 4, 6))))
    t.append(tensor("block2.conv1.bias", "conv", rng.normal(0, 0.1, 6)))
    t.append(tensor("dense1.weight", "dense", rng.normal(0, 0.03, (256 * 6, 8))))
    t.append(tensor("dense1.bias", "dense", rng.normal(0, 0.1, 8)))
    t.append(tensor("dense2.weight", "dense", rng.normal(0, 0.5, (8, 1))))
    t.append(tensor("dense2.bias", "dense", rng.normal(0, 0.1, 1)))
    return t


def write_weights(path, tensors):
    with open(path, "wb") as f:
        f.write(b"SPTWNN")
        f.write(struct.pack("<II", 1, len(tensors)))
        for name, kind, arr in tensors:
            nb = name.encode()
            f.write(struct.pack("<H", len(nb)))
            f.write(nb)
            f.write(struct.pack("<BB", kind, arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            f.write(arr.astype("<f4").tobytes())


def conv_same(x, w, b):
    k = w.shape[0]
    pad = (k - 1) // 2
    xp = np.pad(x, ((pad, pad), (0, 0)))
    out = np.zeros((x.shape[0], w.shape[2]))
    for l in range(x.shape[0]):
        out[l] = np.einsum("kc,kcf->f", xp[l:l + k], w)
    return out + b


def pool(x):
    n = x.shape[0] // 2
    return np.maximum(x[0:2 * n:2], x[1:2 * n:2])


def nlb(x, p):
    th = x @ p["theta_weight"] + p["theta_bias"]
    ph = x @ p["phi_weight"] + p["phi_bias"]
    g = x @ p["g_weight"] + p["g_bias"]
    s = th @ ph.T
    s = np.exp(s - s.max(axis=1, keepdims=True))
    a = s / s.sum(axis=1, keepdims=True)
    return x + (a @ g) @ p["out_weight"] + p["out_bias"]


def forward(x, w):
    w = {k: v.astype(np.float64) for k, v in w.items()}
    h = conv_same(x, w["block1.conv1.weight"], w["block1.conv1.bias"])
    h = (h - w["block1.bn1.mean"]) / np.sqrt(w["block1.bn1.var"] + 1e-5) * w["block1.bn1.gamma"] + w["block1.bn1.beta"]
    h = np.maximum(h, 0)
    h = np.maximum(conv_same(h, w["block1.conv2.weight"], w["block1.conv2.bias"]), 0)
    h = pool(h)
    h = nlb(h, {k.split(".")[-1]: v for k, v in w.items() if k.startswith("block1.nlb.")})
    h = np.maximum(conv_same(h, w["block2.conv1.weight"], w["block2.conv1.bias"]), 0)
    h = pool(h)
    v = h.reshape(-1)
    v = np.maximum(v @ w["dense1.weight"] + w["dense1.bias"], 0)
    z = (v @ w["dense2.weight"] + w["dense2.bias"])[0]
    return 1.0 / (1.0 + np.exp(-z))


def main():
    t = layers()
    write_weights("tiny.sptwnn", t)
    weights = {name: arr for name, _, arr in t}
    probes = rng.normal(0, np.sqrt(0.5), (32, 1024, 2)).astype(np.float32)
    probes.astype("<f4").tofile("probes.f32")
    out = [float(forward(p.astype(np.float64), weights)) for p in probes]
    with open("golden.json", "w") as f:
        json.dump({"probabilities": out}, f, indent=1)


if __name__ == "__main__":
    main()
