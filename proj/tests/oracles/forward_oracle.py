#!/usr/bin/env python3
# Copyright 2026 The flowforge Authors
# SPDX-License-Identifier: Apache-2.0
"""Independent numpy forward pass for the seed-42 golden network.

Reads a parameter file (weights, biases, condition table, frequency table
and evaluation cases), evaluates the velocity network with plain matrix
products and writes the same document back with an "expected" output per
case.

    python3 forward_oracle.py params.json ../data/forward_seed42.json
"""
import json
import sys

import numpy as np


def gelu(x):
    c = np.sqrt(2.0 / np.pi)
    return 0.5 * x * (1.0 + np.tanh(c * (x + 0.044715 * x**3)))


def forward(doc, x, t, y):
    cfg = doc["config"]
    freqs = np.asarray(doc["frequencies"], dtype=np.float64)
    emb = np.empty(2 * len(freqs))
    emb[0::2] = np.sin(freqs * t)
    emb[1::2] = np.cos(freqs * t)
    table = np.asarray(doc["cond_table"], dtype=np.float64).reshape(cfg["num_conditions"] + 1, cfg["cond_embed_dim"])
    h = np.concatenate([np.asarray(x, dtype=np.float64), emb, table[y]])
    layers = doc["layers"]
    for i, layer in enumerate(layers):
        w = np.asarray(layer["weight"], dtype=np.float64).reshape(layer["shape"])
        h = h @ w + np.asarray(layer["bias"], dtype=np.float64)
        if i + 1 < len(layers):
            h = gelu(h)
    return h


def main():
    with open(sys.argv[1]) as f:
        doc = json.load(f)
    for case in doc["cases"]:
        case["expected"] = forward(doc, case["x"], case["t"], case["y"]).tolist()
    with open(sys.argv[2], "w") as f:
        json.dump(doc, f, indent=1)
        f.write("\n")


if __name__ == "__main__":
    main()
