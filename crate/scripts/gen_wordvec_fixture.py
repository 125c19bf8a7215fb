"""Regenerates crates/core/fixtures/wordvec50.txt.

Vectors are category centroids plus per-word noise, so words within a
category are close in cosine and words across categories are not.
"""
import numpy as np

DIM = 50
CATEGORIES = {
    "people": "man woman boy girl child person crowd officer soldier doctor politician president women people",
    "animals": "dog cat horse bird fox cow",
    "vehicles": "car bus truck bike boat plane train",
    "objects": "building street road tree sky flag podium table chair sign screen phone camera book ball gun bottle window door wall water fire smoke",
    "attributes": "red blue green white black yellow tall small large old young burning wet empty broken",
    "relations": "holding near on in riding wearing behind next speaking chasing carrying watching standing sitting under above to",
    "news": "news report breaking claim video photo says shows official today city police government election vote exclusive viral truth fake real shocking",
    "function": "the a of and is at with stand up for",
}

rng = np.random.default_rng(20240611)
centroids = {c: rng.standard_normal(DIM) for c in CATEGORIES}
male = rng.standard_normal(DIM)
lines = []
for cat, words in CATEGORIES.items():
    for w in words.split():
        v = 0.9 * centroids[cat] + rng.standard_normal(DIM)
        if w in ("man", "boy"):
            v = v + 0.8 * male
        lines.append(w + " " + " ".join(f"{x:.6f}" for x in v))
with open("crates/core/fixtures/wordvec50.txt", "w") as f:
    f.write("\n".join(lines) + "\n")
print(len(lines))
