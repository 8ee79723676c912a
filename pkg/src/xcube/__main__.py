import sys

from xcube.cli import main

sys.exit(main())
