"""Command-line workflow: generate subjects, run a table, read the outputs.

Three noisy five-class subjects go to a temporary directory, then
``mentalbci table`` scores two pipelines on all ten class pairs. The summary
is printed and also saved as ``tables.txt``. The same steps work from a shell
with the ``mentalbci`` command.

    python demos/03_results_table.py
"""
import json
import tempfile
from pathlib import Path

from mentalbci.cli import main

work = Path(tempfile.mkdtemp(prefix="mentalbci-demo-"))
for i in (1, 2, 3):
    main(["--seed", str(i), "synth", "--classes", "5", "--trials", "200", "--channels", "16",
          "--samples", "768", "--ratio", "2", "--noise", "3",
          "-o", str(work / f"S{i}.epo")])
main(["info", str(work / "S1.epo")])

config = {
    "subjects": {f"S{i}": f"S{i}.epo" for i in (1, 2, 3)},
    "window": None,  # synthetic trials are 3 s long; keep them whole
    "eval": {"n_reps": 20, "master_seed": 0},
    "pipelines": [
        {"name": "CSP+LDA", "extractor": {"kind": "csp", "m": 2}, "classifier": {"kind": "lda"}},
        {"name": "FBCSP+KNN", "extractor": {"kind": "fbcsp", "k_select": 4},
         "classifier": {"kind": "knn"}},
    ],
}
(work / "run.json").write_text(json.dumps(config, indent=2))
main(["table", str(work / "run.json"), "--threads", "4", "--output-dir", str(work / "out")])

print("files written:", ", ".join(sorted(p.name for p in (work / "out").iterdir())))
print("working directory:", work)
