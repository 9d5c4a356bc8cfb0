import sys

from ltecorr._main import main

if __name__ == "__main__":
    sys.exit(main())
