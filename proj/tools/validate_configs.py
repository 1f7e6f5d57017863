"""Validate the shipped configs and scenario files against schemas/."""
import json
import pathlib
import sys

import jsonschema
from referencing import Registry, Resource

root = pathlib.Path(sys.argv[1] if len(sys.argv) > 1 else pathlib.Path(__file__).resolve().parent.parent)
schemas = {p.name: json.loads(p.read_text()) for p in (root / "schemas").glob("*.schema.json")}
registry = Registry().with_resources((name, Resource.from_contents(s)) for name, s in schemas.items())


def check(path, schema_name):
    validator = jsonschema.Draft202012Validator(schemas[schema_name], registry=registry)
    errors = sorted(validator.iter_errors(json.loads(path.read_text())), key=lambda e: list(e.path))
    for e in errors:
        print(f"{path.relative_to(root)}: {'/'.join(map(str, e.path))}: {e.message}")
    return not errors


ok = True
for path in sorted((root / "configs").glob("*.json")):
    ok &= check(path, "asymp_config.schema.json" if path.name.startswith("asymp") else "study_config.schema.json")
for path in sorted((root / "scenarios").glob("*.json")):
    ok &= check(path, "scenario.schema.json")
print("all files valid" if ok else "validation failed")
sys.exit(0 if ok else 1)
