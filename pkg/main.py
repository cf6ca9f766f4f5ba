"""Entry point for running the cavitation solver from a source checkout.

Equivalent to the installed ``cavsolve`` command:

    python main.py run --config configs/table1.json
"""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent / "src"))

from cavsolve.cli import main  # noqa: E402

if __name__ == "__main__":
    sys.exit(main())
