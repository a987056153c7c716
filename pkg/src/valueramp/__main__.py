import sys

from valueramp.cli import main

sys.exit(main())
