"""``python -m risre``."""

from .cli import main

main()
