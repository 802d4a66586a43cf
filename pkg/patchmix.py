#!/usr/bin/env python

import logging, sys
import src

if __name__ == "__main__":
    logging.basicConfig(format="%(asctime)s %(levelname)s %(message)s", level=logging.INFO)
    sys.exit(src.main())
