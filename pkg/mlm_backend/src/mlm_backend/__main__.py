"""Run the service: MODEL_ID, DEVICE, MAX_BATCH, PORT read from the environment."""

import uvicorn

from .config import BackendConfig
from .service import create_app


def main() -> None:
    config = BackendConfig.from_env()
    app = create_app(config)
    uvicorn.run(app, host="0.0.0.0", port=config.port, log_level="info")


if __name__ == "__main__":
    main()
