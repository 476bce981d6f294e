# Allows running the demos from a fresh checkout without installing the
# package: falls back to ../src when gravel is not importable.
import sys
from pathlib import Path

try:
    import gravel  # noqa: F401
except ImportError:
    sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))
