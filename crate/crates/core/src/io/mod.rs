//! Text formats: the impression log, sharding with a manifest, and log
//! summaries.

pub mod format;
pub mod records;
pub mod shards;
pub mod summary;

pub use records::{
    read_records, write_records, ImpressionRecord, RecordError, RecordReader, RecordWriter, DEFAULT_TOP_K,
    RECORD_HEADER,
};
pub use shards::{read_manifest, shard_name, write_manifest, ManifestEntry, ShardFile, MANIFEST_FILE};
pub use summary::{summarize, write_summary_tables, Summarizer, Summary};
