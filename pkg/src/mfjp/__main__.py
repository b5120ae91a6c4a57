"""``python -m mfjp`` entry point."""
from .cli import main

raise SystemExit(main())
