"""Independent recomputation of the dataset builders on raw40.jsonl.

Prints the expected ids for the multilabel, multiclass and balanced builds so
they can be frozen into the C++ tests.
"""
import collections
import json

problems = [json.loads(line) for line in open("raw40.jsonl") if line.strip()]


def algorithmic(tag):
    return not tag.startswith("*")


kept = []
for p in problems:
    if not p["statement"].strip() or not p["input_spec"].strip() or not p["output_spec"].strip():
        continue
    tags = sorted(t for t in p["tags"] if algorithmic(t))
    if tags:
        kept.append((p["id"], tags))

counts = collections.Counter(t for _, tags in kept for t in tags)
ranked = sorted(counts, key=lambda t: (-counts[t], t))
print("kept", len(kept), [pid for pid, _ in kept])
print("ranking", [(t, counts[t]) for t in ranked])


def multilabel(k):
    catalog = ranked[:k]
    items = []
    for pid, tags in kept:
        labels = [t for t in catalog if t in tags]
        if labels:
            items.append((pid, labels))
    return catalog, items


def multiclass(k, pool_k):
    catalog, pool = multilabel(pool_k)
    top = catalog[:k]
    return top, [(pid, labels[0]) for pid, labels in pool if len(labels) == 1 and labels[0] in top]


for k in (5, 20):
    catalog, items = multilabel(min(k, len(ranked)))
    card = sum(len(l) for _, l in items) / len(items)
    print(f"multilabel k={k}", catalog, len(items), [pid for pid, _ in items])
    print("  cardinality", card, "density", card / len(catalog),
          "subsets", len({tuple(l) for _, l in items}))

catalog, items = multiclass(3, 5)
print("multiclass k=3 pool=5", catalog, len(items))
for c in catalog:
    print("  ", c, [pid for pid, label in items if label == c])

by_class = collections.defaultdict(list)
for pid, label in items:
    by_class[label].append(pid)
order = sorted(by_class, key=lambda c: (-len(by_class[c]), c))
print("balanced class order", [(c, len(by_class[c])) for c in order])
