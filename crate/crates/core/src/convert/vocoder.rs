//! External vocoder adapter: hand the Mel feature file to a user-supplied
//! command and let it produce the waveform.

use std::path::Path;
use std::process::Command;

use crate::error::{Error, Result};

/// Run a command template with `{mel}` and `{wav}` placeholders substituted.
/// The command's exit status is propagated; nonzero fails the conversion.
pub fn run_external_vocoder(template: &str, mel_path: &Path, wav_path: &Path) -> Result<()> {
    let command = template
        .replace("{mel}", &mel_path.to_string_lossy())
        .replace("{wav}", &wav_path.to_string_lossy());
    let status = Command::new("sh")
        .arg("-c")
        .arg(&command)
        .status()
        .map_err(|e| Error::io(mel_path, e))?;
    if !status.success() {
        return Err(Error::VocoderCommand { command, status: status.code().unwrap_or(-1) });
    }
    Ok(())
}
