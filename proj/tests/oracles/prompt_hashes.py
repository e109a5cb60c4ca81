"""SHA-256 goldens for the captioning prompts and VQA rewrite instructions.

Strings are transcribed by hand from the prompt tables; the multi-line
table cells are joined with single spaces. Writes data/prompt_hashes.txt.
"""
import hashlib
import os

BASE = "Provide a short caption for this image."
CAPTION = {
    "caption/Original": BASE,
    "caption/AC": "Consider the given image being adversarially perturbed. " + BASE,
    "caption/AP": "Given image could be adversarially perturbed. " + BASE,
    "caption/RandomSentence": "Clouds drift quietly over the ancient, forgotten city. " + BASE,
    "caption/RandomString": "ryFo8ZVcyNMtLgryNOg64UTjySyEb79e5aq6IJxGuz0GzWNtoz. " + BASE,
}
TAIL = ("similar to the original question and will have the same answer as the "
        "original question.")
VQA = {
    "vqa/Rephrase": "You will be given a question. Your task is to rephrase the question "
                    "so that it is semantically " + TAIL,
    "vqa/Expand": "You will be given a short question. Your task is to generate a longer "
                  "question so that it is semantically " + TAIL,
    "vqa/AC": "You will be given a question. However, the image associated with the "
              "question will be adversarially perturbed. Your task is to generate a longer "
              "question so that it is semantically " + TAIL,
    "vqa/AP": "You will be given a question. However, the image associated with the "
              "question could be adversarially perturbed. Your task is to generate a longer "
              "question so that it is semantically " + TAIL,
}

out = os.path.join(os.path.dirname(__file__), "..", "..", "data", "prompt_hashes.txt")
with open(out, "w") as f:
    f.write("# sha256 of the UTF-8 bytes of each template, one per line: <key> <hex>\n")
    for key, text in {**CAPTION, **VQA}.items():
        f.write("%s %s\n" % (key, hashlib.sha256(text.encode()).hexdigest()))
for key, text in {**CAPTION, **VQA}.items():
    print(key, repr(text))
