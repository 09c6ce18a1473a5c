"""
From raw titles to fixed-length id sequences
============================================

Titles are lower-cased, stripped of punctuation, numbers and stopwords, then
mapped through a frequency-ordered vocabulary and padded or truncated to 15
ids.  This walk-through uses the synthetic corpus so it runs anywhere.
"""

import matplotlib.pyplot as plt

from _common import OUT
from ffn.data import class_distribution, generate_synthetic
from ffn.text import TextPipeline, clean_text, length_percentiles, raw_tokens

###############################################################################
# A handful of cleaning examples.

for title in ["Breaking News: 100 cats!!", "The U.S. and the 3.5% rate", "Satire?? Of COURSE."]:
    print(f"{title!r:35} -> {clean_text(title)}")

###############################################################################
# A synthetic corpus: 20 titles per class, balanced by construction.

samples = generate_synthetic(seed=0, per_class_count=20)
dist = class_distribution(samples)
for label, share in dist.proportions["train"].items():
    print(f"{label.display:<22}{share:.3f}")

###############################################################################
# Fit the vocabulary and encode.  Id 0 is padding, id 1 the unknown word.

pipeline = TextPipeline.fit(s.title for s in samples)
ids = pipeline.transform(s.title for s in samples[:3])
print(len(pipeline.vocab), "vocabulary entries")
print(ids)

###############################################################################
# Share of titles shorter than a few candidate lengths, before and after cleaning.

raw = length_percentiles([raw_tokens(s.title) for s in samples], thresholds=range(2, 21, 2))
clean = length_percentiles([clean_text(s.title) for s in samples], thresholds=range(2, 21, 2))
fig, ax = plt.subplots(figsize=(5, 3))
ax.plot(list(raw), list(raw.values()), marker="o", label="raw")
ax.plot(list(clean), list(clean.values()), marker="s", label="cleaned")
ax.axvline(15, color="grey", ls=":")
ax.set_xlabel("length threshold (tokens)")
ax.set_ylabel("% of titles shorter")
ax.legend()
fig.tight_layout()
fig.savefig(OUT / "length_percentiles.png", dpi=100)
print("saved", OUT / "length_percentiles.png")
