import sys

from dta_sa.cli import main

sys.exit(main())
