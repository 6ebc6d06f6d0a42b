"""
netcourse - Main Entry Point

Thin wrapper so the tool can be run from a checkout without installing:

    python main.py fit --expr expression.tsv --network network.tsv --out run/
"""

from netcourse.cli import run

if __name__ == "__main__":
    run()
