"""
Reading a metrics report
========================

Rows of the confusion matrix are gold classes and columns are predictions.
Micro and macro averages cover only the five fake classes, but a True title
predicted as, say, Satire still counts as a Satire false positive.
"""

import matplotlib.pyplot as plt
import numpy as np

from _common import OUT
from ffn.labels import DISPLAY_NAMES, Label
from ffn.metrics import MetricsReport, subset_micro_macro

cm = np.zeros((6, 6), dtype=int)
cm[Label.TRUE, Label.TRUE] = 8
cm[Label.TRUE, Label.SATIRE] = 2
cm[Label.SATIRE, Label.SATIRE] = 3
cm[Label.SATIRE, Label.TRUE] = 1
report = MetricsReport.from_confusion(cm)
print(report.to_table())

###############################################################################
# Over all six classes every error is one FP and one FN, so micro F1 is accuracy.

print(subset_micro_macro(cm, subset=range(6))["micro"]["f1"], report.accuracy)

fig, ax = plt.subplots(figsize=(4.5, 4))
ax.imshow(cm, cmap="Blues")
names = [DISPLAY_NAMES[l] for l in Label]
ax.set_xticks(range(6), names, rotation=60, ha="right", fontsize=7)
ax.set_yticks(range(6), names, fontsize=7)
ax.set_xlabel("predicted")
ax.set_ylabel("gold")
fig.tight_layout()
fig.savefig(OUT / "confusion.png", dpi=110)
