#!/usr/bin/env python3
"""Checks that parsed insights match docs/insight.schema.json.

Parses a fixed set of sentences with `xlint parse` and validates each
complete document with the reference jsonschema package.
"""

import argparse
import json
import pathlib
import subprocess
import sys
import tempfile

import jsonschema

SENTENCES = [
    "there is no correlation between blood pressure attributions and serum triglycerides attributions",
    "the number of patients with positive attribution for blood pressure is greater than the number with negative attribution",
    "for more than 65% of patients, bmi has a positive attribution",
    "the mean attribution of bmi is greater than 0.01 when age is above 0",
    "there is a positive correlation between bmi values and bmi attributions when bp is between -0.05 and 0.05",
    "the mean attribution of bmi is greater than that of bp",
    "the variance of the shap values of s1 is at most 0.2",
    "as bmi increases bmi attributions tend to rise",
    "the fraction of rows with attribution of bp above 0.01 is about 0.3 if sex = 2",
    "the maximum attribution of s6 is less than the minimum value of age",
]


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--xlint", required=True)
    ap.add_argument("--schema", required=True)
    args = ap.parse_args()

    validator = jsonschema.Draft7Validator(json.loads(pathlib.Path(args.schema).read_text()))
    failures = 0
    with tempfile.TemporaryDirectory() as tmp:
        table = pathlib.Path(tmp) / "table.json"
        subprocess.run([args.xlint, "synth", "--case", "2", "-o", str(table)], check=True)
        for text in SENTENCES:
            run = subprocess.run([args.xlint, "parse", "--data", str(table), text],
                                 capture_output=True, text=True)
            try:
                out = json.loads(run.stdout)
            except json.JSONDecodeError:
                print(f"FAIL unparsed output for: {text}\n{run.stdout}{run.stderr}")
                failures += 1
                continue
            if out.get("kind") != "insight":
                print(f"FAIL not a complete insight ({out.get('kind')}): {text}")
                failures += 1
                continue
            errors = list(validator.iter_errors(out["document"]))
            for e in errors:
                print(f"FAIL {text}: {e.message} at {list(e.absolute_path)}")
            failures += bool(errors)
    print(f"{len(SENTENCES)} documents checked, {failures} invalid")
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
