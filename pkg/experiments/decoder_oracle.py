"""Writes results/decoder_oracle.json: MWPM against ML on 10^6 d=3 Bell-prep syndromes at p = 0.1%."""

import json
import logging
import sys
from pathlib import Path

from bellsurgery.harness import atomic_write
from bellsurgery.oracle import decoder_oracle

logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
out = Path(sys.argv[1] if len(sys.argv) > 1 else "results") / "decoder_oracle.json"
rows = [decoder_oracle(protocol, shots=10**6, seed=2024).to_dict() for protocol in ("BenchmarkDirect", "BellDirect")]
atomic_write(out, json.dumps(rows, indent=1) + "\n")
print(out)
