import sys

from tailgp.cli import main

sys.exit(main())
