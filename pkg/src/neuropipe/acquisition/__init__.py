from .adapters import ConnectionRefused, MetadataMismatch, StreamHandle, StreamOutlet, open_stream
from .protocol import (BadMagic, ChunkMessage, EventMessage, FrameDecoder, LengthOverflow, MetadataMessage,
                       ProtocolError, TruncatedFrame, UnknownFrameType, decode_frame, decode_stream, encode_frame,
                       encode_stream)
from .session import (SessionFormatError, SessionRecord, read_events_csv, read_session_csv, read_stream_csv,
                      write_events_csv, write_session_csv, write_stream_csv)
from .sync import FusedFrame, FusedFrames, GapEvent, Synchronizer, SyncPolicy, synchronize
from .types import AcquisitionError, SampleChunk, StreamEvent, concat_chunks, split_chunks
