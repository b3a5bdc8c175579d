#!/usr/bin/env python3
"""Convert a torchvision-style ResNet state_dict (.pth) into the SCDCKPT tensor table
read by model.encoder.pretrained_path."""
import argparse
import json
import struct

import torch

MAGIC = b"SCDCKPT\0"
FORMAT_VERSION = 1
DTYPES = {torch.float32: 0, torch.float64: 1, torch.int64: 2}


def write_table(path, tensors):
    header = json.dumps({"format_version": FORMAT_VERSION}).encode()
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<IQ", FORMAT_VERSION, len(header)))
        f.write(header)
        f.write(struct.pack("<Q", len(tensors)))
        for name, t in sorted(tensors.items()):
            t = t.detach().cpu().contiguous()
            key = name.encode()
            f.write(struct.pack("<I", len(key)))
            f.write(key)
            f.write(struct.pack("<BI", DTYPES[t.dtype], t.dim()))
            f.write(struct.pack(f"<{t.dim()}q", *t.shape))
            f.write(t.numpy().tobytes())


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("state_dict", help="torch.save'd ResNet state_dict")
    ap.add_argument("out", help="output tensor table")
    args = ap.parse_args()

    state = torch.load(args.state_dict, map_location="cpu")
    if "state_dict" in state:
        state = state["state_dict"]
    keep = {}
    for name, t in state.items():
        if name.startswith("fc.") or name.endswith("num_batches_tracked"):
            continue
        keep[name] = t.float() if t.is_floating_point() else t
    write_table(args.out, keep)
    print(f"wrote {len(keep)} tensors to {args.out}")


if __name__ == "__main__":
    main()
