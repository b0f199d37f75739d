#!/usr/bin/env python3
"""Convert a Geom-GCN dataset directory into the Planetoid layout read by nogat.

    geom_gcn_to_planetoid.py SRC_DIR OUT_DIR NAME [--index-features N]

SRC_DIR holds out1_node_feature_label.txt and out1_graph_edges.txt.
Writes OUT_DIR/NAME/NAME.content and OUT_DIR/NAME/NAME.cites.

--index-features N treats each feature field as a list of active indices
(the film/actor release) and expands it to N binary columns.
"""

import argparse
import sys
from pathlib import Path


def read_rows(path):
    with open(path, encoding="utf-8") as f:
        next(f, None)
        for lineno, line in enumerate(f, start=2):
            line = line.rstrip("\r\n")
            if line:
                yield lineno, line.split("\t")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("src", type=Path)
    ap.add_argument("out", type=Path)
    ap.add_argument("name")
    ap.add_argument("--index-features", type=int, metavar="N")
    args = ap.parse_args()

    nodes = args.src / "out1_node_feature_label.txt"
    edges = args.src / "out1_graph_edges.txt"
    dest = args.out / args.name
    dest.mkdir(parents=True, exist_ok=True)

    with open(dest / f"{args.name}.content", "w", encoding="utf-8") as out:
        for lineno, f in read_rows(nodes):
            if len(f) != 3:
                sys.exit(f"{nodes}:{lineno}: expected 3 fields, got {len(f)}")
            node, feats, label = f
            tokens = [t for t in feats.split(",") if t]
            if args.index_features:
                dense = ["0"] * args.index_features
                for t in tokens:
                    k = int(t)
                    if not 0 <= k < args.index_features:
                        sys.exit(f"{nodes}:{lineno}: feature index {k} out of range")
                    dense[k] = "1"
                tokens = dense
            out.write("\t".join([node, *tokens, label]) + "\n")

    with open(dest / f"{args.name}.cites", "w", encoding="utf-8") as out:
        for lineno, f in read_rows(edges):
            if len(f) != 2:
                sys.exit(f"{edges}:{lineno}: expected 2 fields, got {len(f)}")
            out.write(f"{f[1]}\t{f[0]}\n")


if __name__ == "__main__":
    main()
