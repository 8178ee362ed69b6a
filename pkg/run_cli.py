import sys

from jonesexpand.cli import main

if __name__ == "__main__":
    sys.exit(main())
