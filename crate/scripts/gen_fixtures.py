#!/usr/bin/env python3
"""Writes the model and device fixtures under crates/core/fixtures/."""

import json
import os
import sys

OUT = os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "crates", "core", "fixtures")


class Net:
    def __init__(self, name, c, h):
        self.name = name
        self.layers = [{"id": "input", "kind": "input", "c_out": c, "h": h}]
        self.edges = []
        self.shape = {"input": (c, h, h)}

    def _add(self, layer, src, shape):
        self.layers.append(layer)
        for s in src if isinstance(src, list) else [src]:
            self.edges.append([s, layer["id"]])
        self.shape[layer["id"]] = shape
        return layer["id"]

    def conv(self, id, src, c_out, k, stride=1, pad=None):
        c, h1, h2 = self.shape[src]
        k1, k2 = k if isinstance(k, tuple) else (k, k)
        if pad is None:
            pad = (k1 // 2, k2 // 2)
        elif isinstance(pad, int):
            pad = (pad, pad)
        o1 = (h1 + 2 * pad[0] - k1) // stride + 1
        o2 = (h2 + 2 * pad[1] - k2) // stride + 1
        assert (h1 + 2 * pad[0] - k1) % stride == 0, id
        assert (h2 + 2 * pad[1] - k2) % stride == 0, id
        rec = {"id": id, "kind": "conv", "c_in": c, "c_out": c_out,
               "h": dim(h1, h2), "k": dim(k1, k2), "stride": stride, "pad": dim(*pad)}
        return self._add(rec, src, (c_out, o1, o2))

    def pool(self, id, src, kind, window, stride, pad=0):
        c, h1, h2 = self.shape[src]
        o1 = (h1 + 2 * pad - window) // stride + 1
        o2 = (h2 + 2 * pad - window) // stride + 1
        rec = {"id": id, "kind": kind, "window": window, "stride": stride, "pad": pad}
        return self._add(rec, src, (c, o1, o2))

    def concat(self, id, srcs):
        shapes = [self.shape[s] for s in srcs]
        assert all(s[1:] == shapes[0][1:] for s in shapes), id
        return self._add({"id": id, "kind": "concat"}, srcs, (sum(s[0] for s in shapes), *shapes[0][1:]))

    def output(self, id, src):
        return self._add({"id": id, "kind": "output"}, src, self.shape[src])

    def doc(self, output="output"):
        return {"name": self.name, "layers": self.layers, "edges": self.edges,
                "input": "input", "output": output}


def dim(a, b):
    return a if a == b else [a, b]


def googlenet():
    n = Net("googlenet", 3, 223)
    x = n.conv("conv1", "input", 64, 7, stride=2, pad=3)
    x = n.pool("pool1", x, "maxpool", 3, 2, 1)
    x = n.conv("conv2_reduce", x, 64, 1)
    x = n.conv("conv2", x, 192, 3)
    x = n.pool("pool2", x, "maxpool", 3, 2, 1)

    def inception(name, src, c1, c3r, c3, c5r, c5, cp):
        b1 = n.conv(f"{name}_1x1", src, c1, 1)
        b2 = n.conv(f"{name}_3x3", n.conv(f"{name}_3x3_reduce", src, c3r, 1), c3, 3)
        b3 = n.conv(f"{name}_5x5", n.conv(f"{name}_5x5_reduce", src, c5r, 1), c5, 5)
        p = n.pool(f"{name}_pool", src, "maxpool", 3, 1, 1)
        b4 = n.conv(f"{name}_pool_proj", p, cp, 1)
        return n.concat(f"{name}_concat", [b1, b2, b3, b4])

    def aux(name, src):
        p = n.pool(f"{name}_pool", src, "avgpool", 5, 3)
        c = n.conv(f"{name}_conv", p, 128, 1)
        f1 = n.conv(f"{name}_fc1", c, 1024, 4, pad=0)
        f2 = n.conv(f"{name}_fc2", f1, 1000, 1)
        n.output(f"{name}_output", f2)

    x = inception("inception_3a", x, 64, 96, 128, 16, 32, 32)
    x = inception("inception_3b", x, 128, 128, 192, 32, 96, 64)
    x = n.pool("pool3", x, "maxpool", 3, 2, 1)
    x = inception("inception_4a", x, 192, 96, 208, 16, 48, 64)
    aux("aux1", x)
    x = inception("inception_4b", x, 160, 112, 224, 24, 64, 64)
    x = inception("inception_4c", x, 128, 128, 256, 24, 64, 64)
    x = inception("inception_4d", x, 112, 144, 288, 32, 64, 64)
    aux("aux2", x)
    x = inception("inception_4e", x, 256, 160, 320, 32, 128, 128)
    x = n.pool("pool4", x, "maxpool", 3, 2, 1)
    x = inception("inception_5a", x, 256, 160, 320, 32, 128, 128)
    x = inception("inception_5b", x, 384, 192, 384, 48, 128, 128)
    x = n.pool("pool5", x, "avgpool", 7, 1)
    x = n.conv("fc", x, 1000, 1)
    n.output("output", x)
    return n.doc()


def inception_v4():
    n = Net("inception_v4", 3, 299)
    x = n.conv("stem_conv1", "input", 32, 3, stride=2, pad=0)
    x = n.conv("stem_conv2", x, 32, 3, pad=0)
    x = n.conv("stem_conv3", x, 64, 3)
    a = n.pool("stem_pool1", x, "maxpool", 3, 2)
    b = n.conv("stem_conv4", x, 96, 3, stride=2, pad=0)
    x = n.concat("stem_concat1", [a, b])
    a = n.conv("stem_a_3x3", n.conv("stem_a_1x1", x, 64, 1), 96, 3, pad=0)
    b = n.conv("stem_b_1x1", x, 64, 1)
    b = n.conv("stem_b_7x1", b, 64, (7, 1))
    b = n.conv("stem_b_1x7", b, 64, (1, 7))
    b = n.conv("stem_b_3x3", b, 96, 3, pad=0)
    x = n.concat("stem_concat2", [a, b])
    a = n.conv("stem_conv5", x, 192, 3, stride=2, pad=0)
    b = n.pool("stem_pool2", x, "maxpool", 3, 2)
    x = n.concat("stem_concat3", [a, b])

    def block_a(name, src):
        b1 = n.conv(f"{name}_pool_1x1", n.pool(f"{name}_pool", src, "avgpool", 3, 1, 1), 96, 1)
        b2 = n.conv(f"{name}_1x1", src, 96, 1)
        b3 = n.conv(f"{name}_b3_3x3", n.conv(f"{name}_b3_1x1", src, 64, 1), 96, 3)
        b4 = n.conv(f"{name}_b4_1x1", src, 64, 1)
        b4 = n.conv(f"{name}_b4_3x3a", b4, 96, 3)
        b4 = n.conv(f"{name}_b4_3x3b", b4, 96, 3)
        return n.concat(f"{name}_concat", [b1, b2, b3, b4])

    def reduction_a(src):
        b1 = n.pool("red_a_pool", src, "maxpool", 3, 2)
        b2 = n.conv("red_a_3x3", src, 384, 3, stride=2, pad=0)
        b3 = n.conv("red_a_b3_1x1", src, 192, 1)
        b3 = n.conv("red_a_b3_3x3a", b3, 224, 3)
        b3 = n.conv("red_a_b3_3x3b", b3, 256, 3, stride=2, pad=0)
        return n.concat("red_a_concat", [b1, b2, b3])

    def block_b(name, src):
        b1 = n.conv(f"{name}_pool_1x1", n.pool(f"{name}_pool", src, "avgpool", 3, 1, 1), 128, 1)
        b2 = n.conv(f"{name}_1x1", src, 384, 1)
        b3 = n.conv(f"{name}_b3_1x1", src, 192, 1)
        b3 = n.conv(f"{name}_b3_1x7", b3, 224, (1, 7))
        b3 = n.conv(f"{name}_b3_7x1", b3, 256, (7, 1))
        b4 = n.conv(f"{name}_b4_1x1", src, 192, 1)
        b4 = n.conv(f"{name}_b4_1x7a", b4, 192, (1, 7))
        b4 = n.conv(f"{name}_b4_7x1a", b4, 224, (7, 1))
        b4 = n.conv(f"{name}_b4_1x7b", b4, 224, (1, 7))
        b4 = n.conv(f"{name}_b4_7x1b", b4, 256, (7, 1))
        return n.concat(f"{name}_concat", [b1, b2, b3, b4])

    def reduction_b(src):
        b1 = n.pool("red_b_pool", src, "maxpool", 3, 2)
        b2 = n.conv("red_b_b2_3x3", n.conv("red_b_b2_1x1", src, 192, 1), 192, 3, stride=2, pad=0)
        b3 = n.conv("red_b_b3_1x1", src, 256, 1)
        b3 = n.conv("red_b_b3_1x7", b3, 256, (1, 7))
        b3 = n.conv("red_b_b3_7x1", b3, 320, (7, 1))
        b3 = n.conv("red_b_b3_3x3", b3, 320, 3, stride=2, pad=0)
        return n.concat("red_b_concat", [b1, b2, b3])

    def block_c(name, src):
        b1 = n.conv(f"{name}_pool_1x1", n.pool(f"{name}_pool", src, "avgpool", 3, 1, 1), 256, 1)
        b2 = n.conv(f"{name}_1x1", src, 256, 1)
        b3 = n.conv(f"{name}_b3_1x1", src, 384, 1)
        b3a = n.conv(f"{name}_b3_1x3", b3, 256, (1, 3))
        b3b = n.conv(f"{name}_b3_3x1", b3, 256, (3, 1))
        b4 = n.conv(f"{name}_b4_1x1", src, 384, 1)
        b4 = n.conv(f"{name}_b4_3x1", b4, 448, (3, 1))
        b4 = n.conv(f"{name}_b4_1x3", b4, 512, (1, 3))
        b4a = n.conv(f"{name}_b4_1x3b", b4, 256, (1, 3))
        b4b = n.conv(f"{name}_b4_3x1b", b4, 256, (3, 1))
        return n.concat(f"{name}_concat", [b1, b2, b3a, b3b, b4a, b4b])

    for i in range(4):
        x = block_a(f"inception_a{i + 1}", x)
    x = reduction_a(x)
    for i in range(7):
        x = block_b(f"inception_b{i + 1}", x)
    x = reduction_b(x)
    for i in range(3):
        x = block_c(f"inception_c{i + 1}", x)
    x = n.pool("final_pool", x, "avgpool", 8, 1)
    x = n.conv("fc", x, 1000, 1)
    n.output("output", x)
    return n.doc()


def toy():
    n = Net("toy2", 64, 28)
    x = n.conv("a_3x3", "input", 64, 3)
    x = n.conv("b_1x7", x, 64, (1, 7))
    n.output("output", x)
    return n.doc()


def k4():
    # input, conv a, concat b and output pairwise adjacent
    n = Net("k4", 4, 8)
    a = n.conv("a", "input", 4, 1)
    b = n.concat("b", ["input", a])
    n.layers.append({"id": "output", "kind": "output"})
    for s in ["input", a, b]:
        n.edges.append([s, "output"])
    return n.doc()


U200 = {
    "dsp_budget": 6084,
    "dsp_per_pe": 1,
    "bw_elems_per_cycle": 64,
    "burst_len": 64,
    "freq_mhz": 286,
    "lt": 0,
    "sram_capacity": 4194304,
    "pool_overhead": 0.015625,
}


def main():
    out = sys.argv[1] if len(sys.argv) > 1 else OUT
    os.makedirs(out, exist_ok=True)
    files = {
        "googlenet.json": googlenet(),
        "inception_v4.json": inception_v4(),
        "toy2.json": toy(),
        "k4.json": k4(),
        "u200.json": U200,
    }
    for name, doc in files.items():
        with open(os.path.join(out, name), "w") as f:
            json.dump(doc, f, indent=1)
            f.write("\n")
    for name in ("googlenet.json", "inception_v4.json"):
        convs = sum(1 for l in files[name]["layers"] if l["kind"] == "conv")
        print(f"{name}: {len(files[name]['layers'])} layers, {convs} conv")


if __name__ == "__main__":
    main()
