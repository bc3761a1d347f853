# src/config/settings.py
import os
from dotenv import load_dotenv, find_dotenv

load_dotenv(find_dotenv(usecwd=True))


class Settings:
    output_dir = os.getenv('MIMO_OUTPUT_DIR', 'output')

    logging = {
        'log_file': os.getenv('MIMO_LOG_FILE', '').strip() or None,
        'level': os.getenv('MIMO_LOG_LEVEL', 'INFO').strip().upper()
    }

    # 蒙特卡洛并行线程数，CLI 的 --threads 优先
    threads = int(os.getenv('MIMO_THREADS', '1'))


settings = Settings()
