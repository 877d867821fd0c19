pub mod api;
pub mod audio;
pub mod blobcrypt;
pub mod evaluation;
pub mod fsutil;
pub mod keyfile;
pub mod matching;
pub mod mfcc;
pub mod protocol;
pub mod ringhe;
