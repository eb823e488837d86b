import os
import logging
import logging.handlers

logging.basicConfig(level=logging.DEBUG)

FORMAT = "%(asctime)-15s:%(name)s:%(levelname)s:%(message)s"


def get_logger(name, log_dir, command, stderr_level=logging.INFO):
    """Logger for one CLI command writing to
    log_dir/<command>.log (everything) and log_dir/<command>-info.log
    (info and above, the run summary), echoing to stderr
    """
    logger = logging.getLogger(name)
    logger.handlers = []
    logger.propagate = False
    logger.setLevel(logging.DEBUG)
    formatter = logging.Formatter(fmt=FORMAT)

    os.makedirs(log_dir, exist_ok=True)
    for fname, level in (("%s.log" % command, logging.DEBUG),
                         ("%s-info.log" % command, logging.INFO)):
        file_handler = logging.FileHandler(os.path.join(log_dir, fname),
                                           mode="w")
        file_handler.setLevel(level)
        file_handler.setFormatter(formatter)
        logger.addHandler(file_handler)

    # rank deficiency warnings from the least squares fits go to the files
    logging.captureWarnings(True)
    warnings_logger = logging.getLogger("py.warnings")
    warnings_logger.handlers = list(logger.handlers)
    warnings_logger.propagate = False

    stderr_handler = logging.StreamHandler()
    stderr_handler.setLevel(stderr_level)
    stderr_handler.setFormatter(formatter)
    logger.addHandler(stderr_handler)

    return logger
