import sys

from fedsim import main

if __name__ == "__main__":
    sys.exit(main())
