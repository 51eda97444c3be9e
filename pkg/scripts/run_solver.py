"""Fractional Steklov solver entry point (same subcommands as the `steklov` console script)."""
import sys
from pathlib import Path
sys.path.insert(0, str(Path(__file__).parent.parent))

from dotenv import load_dotenv
load_dotenv()

from app.cli import cli_dispatch


if __name__ == "__main__":
    sys.exit(cli_dispatch(sys.argv[1:]))
