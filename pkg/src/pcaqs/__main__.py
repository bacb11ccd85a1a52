import sys

from pcaqs.cli import main

sys.exit(main())
