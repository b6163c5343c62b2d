import sys

from hsa.cli import main

sys.exit(main())
