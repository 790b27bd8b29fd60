"""Run the three-run layer ablation on a dataset and print the table.

    python scripts/run_ablation.py [--dataset PATH] [--out report.json]
"""

import argparse
import json
from importlib import resources
from pathlib import Path

from rgmem.backend import make_backend, make_judge
from rgmem.config import load_config
from rgmem.evaluation import ablation_configs, load_dataset, render_table, run_eval, suite_document, validate_report


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--dataset", default=str(resources.files("rgmem") / "data" / "micro_locomo.json"))
    ap.add_argument("--config")
    ap.add_argument("--out", default="ablation.json")
    args = ap.parse_args()

    config = load_config(args.config)
    dataset = load_dataset(args.dataset)
    backend, judge = make_backend(config.backend), make_judge(config.backend)
    reports = [run_eval(dataset, cfg, backend, judge, label=label) for label, cfg in ablation_configs(config)]
    doc = suite_document(reports, args.dataset)
    validate_report(doc)
    Path(args.out).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(render_table(reports), end="")


if __name__ == "__main__":
    main()
