#!/usr/bin/env python3
import logging
import sys
from dotenv import load_dotenv

from config.settings import get_app_config

if __name__ == "__main__":
    # Load environment variables
    load_dotenv()
    app_config = get_app_config()

    # Configure logging
    logging.basicConfig(
        level=logging.DEBUG if app_config["debug"] else app_config["log_level"],
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    )
    logger = logging.getLogger(__name__)

    # numeric settings are read when the toolkit is imported
    from app.cli import main

    try:
        sys.exit(main())
    except KeyboardInterrupt:
        logger.info("Run stopped by user")
        sys.exit(1)
    except Exception as e:
        logger.error(f"An error occurred: {e}", exc_info=True)
        sys.exit(1)
