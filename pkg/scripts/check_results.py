#!/usr/bin/env python3
"""
Script to check the result store
"""

import sqlite3
import sys
from pathlib import Path


def check_results(db_path: Path):
    """Print the stored evaluations and pipeline runs"""

    if not db_path.exists():
        print("Database file not found.")
        return

    conn = sqlite3.connect(db_path)
    cursor = conn.cursor()

    try:
        print("📋 Result store:")

        for table in ("evaluations", "pipeline_runs"):
            cursor.execute(f"PRAGMA table_info({table})")
            columns = cursor.fetchall()
            print(f"\n{table} columns:")
            for col in columns:
                print(f"  {col[1]} ({col[2]}) - NOT NULL: {col[3]} - DEFAULT: {col[4]}")

        cursor.execute("SELECT COUNT(*), SUM(object_joint_success) FROM evaluations")
        total, joint_ok = cursor.fetchone()
        print("\n📊 Evaluations:")
        print(f"  Stored: {total}")
        print(f"  Object joint success: {joint_ok or 0}/{total}")

        cursor.execute("SELECT failure_category, COUNT(*) FROM evaluations GROUP BY failure_category ORDER BY failure_category")
        for category, count in cursor.fetchall():
            print(f"  {category or 'none'}: {count}")

        cursor.execute("SELECT status, COUNT(*) FROM pipeline_runs GROUP BY status ORDER BY status")
        print("\n📊 Pipeline runs:")
        for run_status, count in cursor.fetchall():
            print(f"  {run_status}: {count}")

    except sqlite3.Error as e:
        print(f"❌ Error checking result store: {e}")
    finally:
        conn.close()


if __name__ == "__main__":
    check_results(Path(sys.argv[1]) if len(sys.argv) > 1 else Path("articraft.db"))
