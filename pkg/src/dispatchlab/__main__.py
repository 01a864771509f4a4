import sys

from dispatchlab.cli import main

sys.exit(main())
