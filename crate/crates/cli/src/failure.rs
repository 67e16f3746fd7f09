use std::fmt;

use mcate::{Error, ErrorKind};

/// Exit status: 1 usage, 2 data, 3 numerical.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Lib(Error),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Lib(e) => match e.kind() {
                ErrorKind::Usage => 1,
                ErrorKind::Data => 2,
                ErrorKind::Numerical => 3,
            },
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) => f.write_str(m),
            Failure::Lib(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

pub fn io(path: &std::path::Path) -> impl Fn(std::io::Error) -> Failure + '_ {
    move |source| {
        Failure::Lib(Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}
