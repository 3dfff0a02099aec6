import sys

from mcvd.main import main

sys.exit(main())
