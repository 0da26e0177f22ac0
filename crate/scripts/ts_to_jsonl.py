#!/usr/bin/env python3
"""Convert a UEA/UCR multivariate `.ts` file into the line-oriented JSON
format read by `bihdtrans` (one object per line: {"label": int, "values": [[...]]}).

Unequal-length series are padded to a common length by repeating the last
observed value of each channel. Class labels are mapped to 0-based indices in
the order they are declared in the `@classLabel` header.

    python3 scripts/ts_to_jsonl.py JapaneseVowels_TRAIN.ts out_train.jsonl --length 29
"""
import argparse
import json
import sys


def parse_ts(path):
    classes = None
    rows = []
    in_data = False
    with open(path) as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if not in_data:
                low = line.lower()
                if low.startswith("@classlabel"):
                    parts = line.split()
                    classes = parts[2:] if parts[1].lower() == "true" else None
                elif low.startswith("@data"):
                    in_data = True
                continue
            *channels, label = line.split(":")
            series = [[float(v) for v in ch.split(",")] for ch in channels]
            rows.append((series, label.strip()))
    if classes is None:
        classes = sorted({label for _, label in rows})
    return rows, {c: i for i, c in enumerate(classes)}


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("src")
    ap.add_argument("dst")
    ap.add_argument("--length", type=int, default=None,
                    help="target length (default: longest series in the file)")
    args = ap.parse_args()

    rows, index = parse_ts(args.src)
    length = args.length or max(len(ch) for series, _ in rows for ch in series)
    with open(args.dst, "w") as out:
        for series, label in rows:
            padded = []
            for ch in series:
                if len(ch) > length:
                    ch = ch[:length]
                padded.append(ch + [ch[-1]] * (length - len(ch)))
            out.write(json.dumps({"label": index[label], "values": padded}) + "\n")
    print(f"{len(rows)} samples, length {length}, {len(index)} classes", file=sys.stderr)


if __name__ == "__main__":
    main()
