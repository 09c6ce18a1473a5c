"""
End to end with the command line
================================

The same steps through ``ffn``: write a synthetic dataset, look at its
statistics, train, evaluate and classify one title.
"""

import tempfile
from pathlib import Path

from ffn.cli import main as ffn

work = Path(tempfile.mkdtemp())
data, run = work / "data", work / "run"

ffn(["synth", "--out", str(data), "--per-class", "20"])
ffn(["stats", "--data-dir", str(data), "--out", str(run / "stats")])
print((run / "stats" / "stats.txt").read_text())

ffn(["train", "--data-dir", str(data), "--out", str(run), "--model", "cnn", "--max-epochs", "20"])
ffn(["evaluate", "--checkpoint", str(run / "checkpoint"), "--split", "test",
     "--data-dir", str(data), "--out", str(run)])
ffn(["predict", "--checkpoint", str(run / "checkpoint"), "--title", "shocking photo of the senator"])
