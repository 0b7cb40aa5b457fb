import json
from pathlib import Path


def write_report(path, metric: str, value: float, config: dict, n_real: int, n_generated: int,
                 **extra) -> dict:
    report = {"metric": metric, "value": value, "config": config,
              "n_real": n_real, "n_generated": n_generated, **extra}
    Path(path).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return report
