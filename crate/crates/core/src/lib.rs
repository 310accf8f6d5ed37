//! Knowledge-guided attention for sentence-pair matching.

pub mod augment;
pub mod autodiff;
mod binio;
pub mod encoder;
pub mod esim;
pub mod harness;
pub mod optim;
pub mod params;
pub mod simmatrix;
pub mod text;
pub mod train;
pub mod wordnet;

#[cfg(doctest)]
mod book {
    macro_rules! chapters {
        ($($name:ident => $file:literal),* $(,)?) => {
            $(
                #[doc = include_str!(concat!("../../../book/src/", $file))]
                mod $name {}
            )*
        };
    }

    chapters! {
        introduction => "introduction.md",
        similarity => "similarity.md",
        matrices => "matrices.md",
        autodiff => "autodiff.md",
        attention => "attention.md",
        esim => "esim.md",
        training => "training.md",
        augmentation => "augmentation.md",
        evaluation => "evaluation.md",
        formats => "formats.md",
        cli => "cli.md",
    }
}
