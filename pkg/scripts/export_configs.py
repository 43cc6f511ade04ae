"""Write every preset to configs/<name>.json (the files the CLI examples use)."""
import json
from pathlib import Path

from blobtransport.presets import names, preset

OUT = Path(__file__).resolve().parent.parent / "configs"


def main():
    OUT.mkdir(exist_ok=True)
    for name in names():
        raw = preset(name)
        raw.setdefault("output_dir", f"runs/{name}")
        (OUT / f"{name}.json").write_text(json.dumps(raw, indent=2) + "\n", encoding="utf-8")
        print(OUT / f"{name}.json")


if __name__ == "__main__":
    main()
